#!/usr/bin/env python3
"""Regenerates tests/data/bpe: a small byte-level BPE vocabulary (GPT-2 file layout) and
golden encodings produced by the HuggingFace `tokenizers` reference implementation.

    python3 tools/gen_bpe_golden.py tests/data/bpe
"""
import glob
import json
import os
import sys

from tokenizers import ByteLevelBPETokenizer

GOLDEN_STRINGS = [
    "hello world",
    "Hello, World!",
    "The quick brown fox jumps over the lazy dog.",
    "  leading spaces",
    "trailing spaces   ",
    "tabs\tand\nnewlines\n\nhere",
    "it's we're they've I'm you'll he'd",
    "numbers 12345 and 3.14159",
    "café naïve résumé",
    "Ελληνικά κείμενα",
    "日本語のテキスト",
    "emoji 🙂👍 mixed",
    "under_score-and-dash/slash",
    "    \n   ",
    "a",
    " ",
    "Licensed under the Apache License, Version 2.0",
    "WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND",
    "x​y zero width",
    "Mixed CASE words and ALLCAPS",
    "don't stop'til",
    "$100 @user #tag",
    "line one\r\nline two",
]


def main(out_dir):
    os.makedirs(out_dir, exist_ok=True)
    files = sorted(glob.glob("/usr/share/common-licenses/*"))
    tok = ByteLevelBPETokenizer()
    tok.train(files=files, vocab_size=800, min_frequency=2, show_progress=False, special_tokens=[])
    tok.save_model(out_dir)
    # Reload from disk so the goldens come from exactly the committed files.
    ref = ByteLevelBPETokenizer(os.path.join(out_dir, "vocab.json"), os.path.join(out_dir, "merges.txt"))
    golden = [{"text": s, "ids": ref.encode(s).ids} for s in GOLDEN_STRINGS]
    with open(os.path.join(out_dir, "golden.json"), "w", encoding="utf-8") as f:
        f.write("[\n")
        f.write(",\n".join(json.dumps(g, ensure_ascii=False) for g in golden))
        f.write("\n]\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/data/bpe")
