#!/usr/bin/env python3
"""
Parsing utilities for corpus and vocabulary files.

Corpus files are UTF-8 TSV with one ``source<TAB>target`` pair per line;
vocabulary files hold one token per line.
"""

from typing import List, Tuple

from .errors import ParseError


class CorpusParser:
    """Parser for corpus TSV lines and vocabulary files."""

    @staticmethod
    def parse_line(line: str, line_number: int) -> Tuple[List[str], List[str]]:
        """
        Split one corpus line into whitespace-tokenized source and target sides.

        Args:
            line: Line content without its trailing newline
            line_number: 1-based line number used in error messages

        Returns:
            (source tokens, target tokens)
        """
        if not line.strip():
            raise ParseError("blank lines are not allowed", line_number)
        fields = line.split('\t')
        if len(fields) != 2:
            raise ParseError(f"expected exactly one tab, found {len(fields) - 1}", line_number)
        source, target = (field.split() for field in fields)
        if not source:
            raise ParseError("empty source side", line_number)
        if not target:
            raise ParseError("empty target side", line_number)
        return source, target

    @staticmethod
    def parse_corpus(content: str) -> List[Tuple[List[str], List[str]]]:
        lines = content.split('\n')
        if lines and lines[-1] == '':
            lines.pop()
        return [CorpusParser.parse_line(line, number) for number, line in enumerate(lines, start=1)]

    @staticmethod
    def parse_vocab(content: str) -> List[str]:
        tokens = []
        for number, line in enumerate(content.split('\n'), start=1):
            token = line.strip()
            if not token:
                continue
            if len(token.split()) != 1:
                raise ParseError("vocabulary entries must be single tokens", number)
            tokens.append(token)
        return tokens
