"""Corpus BLEU, the training stop rule and checkpoint evaluation."""
