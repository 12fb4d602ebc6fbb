"""
Command registration for ``dat_cli.py``.

Each module registers argparse subcommands and turns their options into calls
into ``src.core``:
- data_tools: gen-data, lm-train
- train_tools: train
- decode_tools: decode, eval
- graph_tools: export-dag, stats
"""
