#!/usr/bin/env python3
"""Reference implementations used to freeze the expected values that appear
in metrics_test.cpp and the acceptance suite.

Each function is written directly from the metric definition, independently
of the C++ code, so the frozen constants act as a cross-check rather than a
copy of the implementation under test.
"""
from collections import Counter
from fractions import Fraction


def levenshtein(a, b):
    m, n = len(a), len(b)
    d = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(m + 1):
        d[i][0] = i
    for j in range(n + 1):
        d[0][j] = j
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + cost)
    return d[m][n]


def edit_similarity(a, b):
    if not a and not b:
        return 1.0
    return 1.0 - levenshtein(a, b) / max(len(a), len(b))


def ngrams(seq, n):
    return Counter(tuple(seq[i:i + n]) for i in range(len(seq) - n + 1))


def bleu4(cand, refs):
    if not cand:
        return 1.0 if any(not r for r in refs) else 0.0
    precisions = []
    for n in range(1, 5):
        cg = ngrams(cand, n)
        total = sum(cg.values())
        maxref = Counter()
        for r in refs:
            rg = ngrams(r, n)
            for g, c in rg.items():
                maxref[g] = max(maxref[g], c)
        clipped = sum(min(c, maxref[g]) for g, c in cg.items())
        if total == 0:
            precisions.append(Fraction(1))
        elif clipped == 0:
            if n == 1:
                return 0.0
            precisions.append(Fraction(1, total + 1))
        else:
            precisions.append(Fraction(clipped, total))
    prod = Fraction(1)
    for p in precisions:
        prod *= p
    geo = float(prod) ** 0.25
    c = len(cand)
    best = None
    for r in refs:
        rl = len(r)
        if best is None or abs(rl - c) < abs(best - c) or (abs(rl - c) == abs(best - c) and rl < best):
            best = rl
    import math
    bp = 1.0 if c > best else math.exp(1.0 - best / c)
    return bp * geo


def lcs(a, b):
    m, n = len(a), len(b)
    d = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            if a[i - 1] == b[j - 1]:
                d[i][j] = d[i - 1][j - 1] + 1
            else:
                d[i][j] = max(d[i - 1][j], d[i][j - 1])
    return d[m][n]


def rouge_l(cand, ref):
    if not cand and not ref:
        return (1.0, 1.0, 1.0)
    if not cand or not ref:
        return (0.0, 0.0, 0.0)
    l = lcs(cand, ref)
    p = l / len(cand)
    r = l / len(ref)
    f = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return (p, r, f)


def meteor(cand, ref):
    used = [False] * len(ref)
    matches = 0
    chunks = 0
    prev = -2
    for tok in cand:
        j = -1
        cont = prev + 1
        if prev >= 0 and cont < len(ref) and not used[cont] and ref[cont] == tok:
            j = cont
        else:
            for k in range(len(ref)):
                if not used[k] and ref[k] == tok:
                    j = k
                    break
        if j >= 0:
            used[j] = True
            matches += 1
            if prev < 0 or j != prev + 1:
                chunks += 1
            prev = j
        else:
            prev = -2
    if matches == 0:
        return 0.0
    p = matches / len(cand)
    r = matches / len(ref)
    f = 10 * p * r / (r + 9 * p)
    penalty = 0.5 * (chunks / matches) ** 3
    return f * (1 - penalty)


def classification_report(actual, predicted, labels):
    per = {}
    for lab in labels:
        tp = sum(1 for a, p in zip(actual, predicted) if a == lab and p == lab)
        fp = sum(1 for a, p in zip(actual, predicted) if a != lab and p == lab)
        fn = sum(1 for a, p in zip(actual, predicted) if a == lab and p != lab)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        per[lab] = (prec, rec, f1, sum(1 for a in actual if a == lab))
    acc = sum(1 for a, p in zip(actual, predicted) if a == p) / len(actual)
    macro = sum(v[2] for v in per.values()) / len(labels)
    weighted = sum(v[2] * v[3] for v in per.values()) / len(actual)
    return per, acc, macro, weighted


def show(name, value):
    print(f"{name} = {value!r}")


if __name__ == "__main__":
    show("lev kitten/sitting", levenshtein(list("kitten"), list("sitting")))
    show("es kitten/sitting", edit_similarity(list("kitten"), list("sitting")))

    gt = ("static void funct0 ( long * data ) { delete data ; } void funct1 ( ) "
          "{ long * data ; data = NULL ; data = new long [ 100 ] ; funct0 ( data ) ; }").split()
    nd = ("static char * funct0 ( char * data ) { data = new char [ 100 ] ; return data ; } "
          "void funct1 ( ) { char * data ; data = NULL ; data = funct0 ( data ) ; "
          "delete data ; }").split()
    show("worked-example lens", (len(gt), len(nd)))
    show("worked-example lev", levenshtein(nd, gt))
    show("worked-example es", edit_similarity(nd, gt))
    show("worked-example bleu", bleu4(nd, [gt]))
    show("worked-example rouge", rouge_l(nd, gt))
    show("worked-example meteor", meteor(nd, gt))

    show("bleu identical len4", bleu4("a b c d".split(), ["a b c d".split()]))
    show("bleu reversed len4", bleu4("a b c d".split(), ["d c b a".split()]))
    show("bleu the-the-the", bleu4("the the the".split(), ["the cat".split()]))
    show("bleu single identical", bleu4(["x"], [["x"]]))
    show("bleu no unigram", bleu4(["z"], [["x"]]))
    show("bleu bp", bleu4("a b c".split(), ["a b c d e".split()]))
    show("bleu multiref tie", bleu4("a b c d".split(),
                                    ["a b c".split(), "a b c d e".split()]))

    show("rouge crossed", rouge_l("a b c d".split(), "a c b d".split()))

    show("meteor single", meteor(["x"], ["x"]))
    show("meteor len4 identical", meteor("a b c d".split(), "a b c d".split()))
    show("meteor cat-sat", meteor("the cat sat".split(), "the cat on the mat".split()))
    show("meteor swapped", meteor("b a".split(), "a b".split()))

    actual = [0, 0, 0, 1, 1, 2, 2, 2, 2, 1]
    pred = [0, 0, 1, 1, 1, 2, 2, 0, 2, 2]
    per, acc, macro, weighted = classification_report(actual, pred, [0, 1, 2])
    show("report per-class", per)
    show("report accuracy", acc)
    show("report macro_f1", macro)
    show("report weighted_f1", weighted)
