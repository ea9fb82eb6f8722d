#!/usr/bin/env python3
"""Builds the tiny CLIP-shaped fixture used by the C++ regression tests.

Writes into tests/fixtures/tiny_clip/:
  bpe_merges.txt        merges file in the CLIP "#version: 0.2" layout
  token_embedding.emb   token embedding rows keyed by decimal token id
  text.onnx/image.onnx  towers restricted to ops OpenCV 4.5 DNN can import
  encoder.json          encoder manifest consumed by the onnx backend
  golden_*.png          golden images (224x224 RGB)
  golden_tokens.json    reference tokenization of the golden sentences
  golden.json           golden sentences/images with reference vectors
  golden.emb            the same vectors in the embedding-table format

Outputs are committed; rerun only when the fixture must change.
    python3 tools/fixtures/make_tiny_clip.py
"""

import gzip
import json
import pathlib
import struct
from collections import Counter

import numpy as np
import regex as re
import torch
import torch.nn as nn

ROOT = pathlib.Path(__file__).resolve().parents[2]
OUT = ROOT / "tests" / "fixtures" / "tiny_clip"
CONTEXT = 77
WIDTH = 48
EMBED_DIM = 32
PATCH = 32
MEAN = (0.48145466, 0.4578275, 0.40821073)
STD = (0.26862954, 0.26130258, 0.27577711)

CORPUS = """
snowboarding apply eye makeup playing daf a photo of a video of a person
strap your feet securely onto the snowboard bindings lean forward to initiate
movement down the slope use heel-to-toe shifts in weight to steer and balance
as you descend a person sliding down a snow-covered slope on a single board
attached to their feet making turns and jumps while maintaining balance
snow-covered mountain slope or snow park snowboard snow boots helmet typing
brush hair ride bike kissing bowling making pizza looking phone it's they're
"""

GOLDEN_SENTENCES = [
    "a video of a person snowboarding.",
    "Café owners' kids aren't TYPING 42 pizzas!!  quickly",
    " ".join(["snowboarding. strap your feet securely onto the snowboard bindings"] * 12),
]


# ---------------------------------------------------------------- tokenizer

def bytes_to_unicode():
    bs = (list(range(ord("!"), ord("~") + 1)) + list(range(ord("¡"), ord("¬") + 1))
          + list(range(ord("®"), ord("ÿ") + 1)))
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, [chr(c) for c in cs]))


PAT = re.compile(r"""<\|startoftext\|>|<\|endoftext\|>|'s|'t|'re|'ve|'m|'ll|'d|[\p{L}]+|[\p{N}]|[^\s\p{L}\p{N}]+""",
                 re.IGNORECASE)


def clean(text):
    return re.sub(r"\s+", " ", text).strip().lower()


def train_merges(corpus, count):
    b2u = bytes_to_unicode()
    words = Counter()
    for tok in re.findall(PAT, clean(corpus)):
        chars = [b2u[b] for b in tok.encode("utf-8")]
        words[tuple(chars[:-1] + [chars[-1] + "</w>"])] += 1
    merges = []
    for _ in range(count):
        pairs = Counter()
        for w, f in words.items():
            for a, b in zip(w, w[1:]):
                pairs[(a, b)] += f
        if not pairs:
            break
        best = min(pairs, key=lambda p: (-pairs[p], p))
        merges.append(best)
        nxt = Counter()
        for w, f in words.items():
            out, i = [], 0
            while i < len(w):
                if i < len(w) - 1 and (w[i], w[i + 1]) == best:
                    out.append(w[i] + w[i + 1])
                    i += 2
                else:
                    out.append(w[i])
                    i += 1
            nxt[tuple(out)] += f
        words = nxt
    return merges


class ReferenceTokenizer:
    """Straight port of the published CLIP simple tokenizer (minus ftfy/html)."""

    def __init__(self, merges):
        self.byte_encoder = bytes_to_unicode()
        vocab = list(self.byte_encoder.values())
        vocab = vocab + [v + "</w>" for v in vocab]
        for m in merges:
            vocab.append("".join(m))
        vocab.extend(["<|startoftext|>", "<|endoftext|>"])
        self.encoder = dict(zip(vocab, range(len(vocab))))
        self.ranks = dict(zip(merges, range(len(merges))))
        self.cache = {"<|startoftext|>": "<|startoftext|>", "<|endoftext|>": "<|endoftext|>"}

    def bpe(self, token):
        if token in self.cache:
            return self.cache[token]
        word = tuple(token[:-1]) + (token[-1] + "</w>",)
        pairs = set(zip(word, word[1:]))
        if not pairs:
            return token + "</w>"
        while True:
            bigram = min(pairs, key=lambda p: self.ranks.get(p, float("inf")))
            if bigram not in self.ranks:
                break
            first, second = bigram
            new_word, i = [], 0
            while i < len(word):
                try:
                    j = word.index(first, i)
                    new_word.extend(word[i:j])
                    i = j
                except ValueError:
                    new_word.extend(word[i:])
                    break
                if word[i] == first and i < len(word) - 1 and word[i + 1] == second:
                    new_word.append(first + second)
                    i += 2
                else:
                    new_word.append(word[i])
                    i += 1
            word = tuple(new_word)
            if len(word) == 1:
                break
            pairs = set(zip(word, word[1:]))
        out = " ".join(word)
        self.cache[token] = out
        return out

    def encode(self, text):
        ids = []
        for tok in re.findall(PAT, clean(text)):
            tok = "".join(self.byte_encoder[b] for b in tok.encode("utf-8"))
            ids.extend(self.encoder[t] for t in self.bpe(tok).split(" "))
        return ids

    def context(self, text):
        sot, eot = self.encoder["<|startoftext|>"], self.encoder["<|endoftext|>"]
        ids = [sot] + self.encode(text) + [eot]
        if len(ids) > CONTEXT:
            ids = ids[:CONTEXT]
            ids[-1] = eot
        return ids + [0] * (CONTEXT - len(ids)), len(ids) - 1


# ------------------------------------------------------------------- towers

class QuickGELU(nn.Module):
    def forward(self, x):
        return x * torch.sigmoid(1.702 * x)


class ResidualMLP(nn.Module):
    def __init__(self, width):
        super().__init__()
        self.fc = nn.Sequential(nn.Linear(width, 2 * width), QuickGELU(), nn.Linear(2 * width, width))

    def forward(self, x):
        return x + self.fc(x)


class TextTower(nn.Module):
    def __init__(self):
        super().__init__()
        self.pos = nn.Parameter(torch.randn(1, CONTEXT, WIDTH) * 0.05)
        self.blocks = nn.Sequential(ResidualMLP(WIDTH), ResidualMLP(WIDTH))
        self.proj = nn.Linear(WIDTH, EMBED_DIM, bias=False)

    def forward(self, token_embeddings, eot_mask):
        x = self.blocks(token_embeddings + self.pos)
        pooled = torch.matmul(eot_mask, x.reshape(CONTEXT, WIDTH))
        return self.proj(pooled)


class ImageTower(nn.Module):
    def __init__(self):
        super().__init__()
        grid = (224 // PATCH) ** 2
        self.conv = nn.Conv2d(3, WIDTH, PATCH, PATCH, bias=False)
        self.pos = nn.Parameter(torch.randn(1, grid, WIDTH) * 0.05)
        self.blocks = nn.Sequential(ResidualMLP(WIDTH), ResidualMLP(WIDTH))
        self.proj = nn.Linear(WIDTH, EMBED_DIM, bias=False)
        self.grid = grid

    def forward(self, pixel_values):
        x = self.conv(pixel_values).reshape(1, WIDTH, self.grid).transpose(1, 2) + self.pos
        x = self.blocks(x)
        pooled = x.mean(dim=1, keepdim=True).reshape(1, WIDTH)
        return self.proj(pooled)


def export(model, args, path, names):
    torch.onnx.export(model, args, str(path), dynamo=False, opset_version=11,
                      input_names=names, output_names=["embedding"])
    import onnx
    from onnx import helper
    graph = onnx.load(str(path))
    for node in graph.graph.node:
        if node.op_type.startswith("Reduce") and not any(a.name == "keepdims" for a in node.attribute):
            node.attribute.append(helper.make_attribute("keepdims", 1))
    onnx.save(graph, str(path))


# ------------------------------------------------------------------ formats

def fnv1a64(data):
    h = 0xcbf29ce484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001b3) & 0xFFFFFFFFFFFFFFFF
    return h


def write_table(path, rows):
    dim = len(next(iter(rows.values())))
    with open(path, "wb") as f:
        f.write(b"ZSEMBTBL")
        f.write(struct.pack("<IIQ", 1, dim, len(rows)))
        for key in sorted(rows):
            kb = key.encode("utf-8")
            f.write(struct.pack("<QI", fnv1a64(kb), len(kb)))
            f.write(kb)
            f.write(np.asarray(rows[key], dtype="<f4").tobytes())


def write_png(path, rgb):
    import cv2
    cv2.imwrite(str(path), cv2.cvtColor(rgb, cv2.COLOR_RGB2BGR))


def main():
    torch.manual_seed(20240613)
    rng = np.random.default_rng(7)
    OUT.mkdir(parents=True, exist_ok=True)

    merges = train_merges(CORPUS, 300)
    with open(OUT / "bpe_merges.txt", "w", encoding="utf-8") as f:
        f.write("#version: 0.2\n")
        for a, b in merges:
            f.write(f"{a} {b}\n")
    with gzip.GzipFile(OUT / "bpe_merges.txt.gz", "wb", mtime=0) as f:
        f.write((OUT / "bpe_merges.txt").read_bytes())
    tok = ReferenceTokenizer(merges)
    vocab_size = len(tok.encoder)

    token_embedding = torch.randn(vocab_size, WIDTH) * 0.5
    write_table(OUT / "token_embedding.emb",
                {str(i): token_embedding[i].numpy() for i in range(vocab_size)})

    text, image = TextTower().eval(), ImageTower().eval()
    export(text, (torch.zeros(1, CONTEXT, WIDTH), torch.zeros(1, CONTEXT)), OUT / "text.onnx",
           ["token_embeddings", "eot_mask"])
    export(image, (torch.zeros(1, 3, 224, 224),), OUT / "image.onnx", ["pixel_values"])

    manifest = {
        "model_tag": "tiny-fixture",
        "embed_dim": EMBED_DIM,
        "context_length": CONTEXT,
        "image_size": 224,
        "text_model": "text.onnx",
        "image_model": "image.onnx",
        "token_embedding": "token_embedding.emb",
        "bpe_merges": "bpe_merges.txt",
        "pixel_mean": list(MEAN),
        "pixel_std": list(STD),
    }
    (OUT / "encoder.json").write_text(json.dumps(manifest, indent=2) + "\n")

    golden = {"tolerance": 1e-4, "texts": [], "images": []}
    tokens = []
    table = {}
    with torch.no_grad():
        for s in GOLDEN_SENTENCES:
            ids, eot = tok.context(s)
            tokens.append({"text": s, "ids": ids, "eot_position": eot, "bpe_ids": tok.encode(s)})
            emb = token_embedding[torch.tensor(ids)].unsqueeze(0)
            mask = torch.zeros(1, CONTEXT)
            mask[0, eot] = 1.0
            vec = text(emb, mask)[0].numpy()
            golden["texts"].append({"text": s, "embedding": vec.tolist()})
            table[s] = vec

        images = {
            "golden_constant.png": np.full((224, 224, 3), (200, 40, 90), dtype=np.uint8),
            "golden_gradient.png": np.stack(list(np.meshgrid(np.arange(224), np.arange(224))) + [
                np.full((224, 224), 128)], -1).astype(np.uint8),
            "golden_noise.png": rng.integers(0, 256, (224, 224, 3), dtype=np.uint8),
        }
        for name, rgb in images.items():
            write_png(OUT / name, rgb)
            px = (rgb.astype(np.float32) / 255.0 - np.array(MEAN, np.float32)) / np.array(STD, np.float32)
            px = torch.from_numpy(px.transpose(2, 0, 1).copy()).unsqueeze(0)
            vec = image(px)[0].numpy()
            key = "frame:%016x" % fnv1a64(rgb.tobytes())
            golden["images"].append({"file": name, "key": key, "embedding": vec.tolist()})
            table[key] = vec

    (OUT / "golden.json").write_text(json.dumps(golden, indent=1) + "\n")
    (OUT / "golden_tokens.json").write_text(json.dumps(
        {"vocab_size": vocab_size, "sot": tok.encoder["<|startoftext|>"],
         "eot": tok.encoder["<|endoftext|>"], "cases": tokens}, indent=1) + "\n")
    write_table(OUT / "golden.emb", table)


if __name__ == "__main__":
    main()
