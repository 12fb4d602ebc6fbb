"""
Core modules for the DAG translation toolkit.

This package contains the model and everything around it:
- dag, dp: the graph container and dynamic programs over it (losses, Viterbi, posteriors)
- glancing, model, training: the transformer producing graphs and its training loop
- decoding, ngram: greedy, lookahead, beam and sampling decoders plus the beam's language model
- data, parser, checkpoint: corpora, vocabularies and the binary checkpoint format
- metrics, export: BLEU variants, graph statistics and JSON/DOT export
- config, logger, errors: run configuration, structured logging and the error hierarchy
- core: the work behind each command
"""
