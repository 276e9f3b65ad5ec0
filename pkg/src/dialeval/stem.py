"""Porter suffix-stripping stemmer, used for the stem-match stage of the
unigram aligner in the consensus metrics. Classic five-step algorithm; no
external lexical resources.
"""

_VOWELS = "aeiou"

_STEP2 = (
    ("ational", "ate"), ("tional", "tion"), ("enci", "ence"), ("anci", "ance"),
    ("izer", "ize"), ("abli", "able"), ("alli", "al"), ("entli", "ent"),
    ("eli", "e"), ("ousli", "ous"), ("ization", "ize"), ("ation", "ate"),
    ("ator", "ate"), ("alism", "al"), ("iveness", "ive"), ("fulness", "ful"),
    ("ousness", "ous"), ("aliti", "al"), ("iviti", "ive"), ("biliti", "ble"),
)

_STEP3 = (
    ("icate", "ic"), ("ative", ""), ("alize", "al"), ("iciti", "ic"),
    ("ical", "ic"), ("ful", ""), ("ness", ""),
)

_STEP4 = (
    "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement",
    "ment", "ent", "ion", "ou", "ism", "ate", "iti", "ous", "ive", "ize",
)


def _is_cons(word, i):
    ch = word[i]
    if ch in _VOWELS:
        return False
    if ch == "y":
        return i == 0 or not _is_cons(word, i - 1)
    return True


def _measure(stem):
    # number of vowel-to-consonant run transitions: [C](VC)^m[V]
    m = 0
    prev_vowel = False
    for i in range(len(stem)):
        cons = _is_cons(stem, i)
        if cons and prev_vowel:
            m += 1
        prev_vowel = not cons
    return m


def _has_vowel(stem):
    return any(not _is_cons(stem, i) for i in range(len(stem)))


def _double_cons(word):
    return len(word) >= 2 and word[-1] == word[-2] and _is_cons(word, len(word) - 1)


def _cvc(word):
    return (
        len(word) >= 3
        and _is_cons(word, len(word) - 3)
        and not _is_cons(word, len(word) - 2)
        and _is_cons(word, len(word) - 1)
        and word[-1] not in "wxy"
    )


def _longest_rule(word, rules):
    best = None
    for suffix, repl in rules:
        if word.endswith(suffix) and (best is None or len(suffix) > len(best[0])):
            best = (suffix, repl)
    return best


def _map_step(word, rules, min_measure=1):
    rule = _longest_rule(word, rules)
    if rule is None:
        return word
    suffix, repl = rule
    stem = word[: len(word) - len(suffix)]
    if _measure(stem) >= min_measure:
        return stem + repl
    return word


def stem(word: str) -> str:
    """Stem one lowercase word; words of length <= 2 pass through."""
    if len(word) <= 2:
        return word

    # step 1a: plurals
    if word.endswith("sses"):
        word = word[:-2]
    elif word.endswith("ies"):
        word = word[:-2]
    elif not word.endswith("ss") and word.endswith("s"):
        word = word[:-1]

    # step 1b: -eed / -ed / -ing
    if word.endswith("eed"):
        if _measure(word[:-3]) > 0:
            word = word[:-1]
    else:
        removed = None
        if word.endswith("ed") and _has_vowel(word[:-2]):
            removed = word = word[:-2]
        elif word.endswith("ing") and _has_vowel(word[:-3]):
            removed = word = word[:-3]
        if removed is not None:
            if word.endswith(("at", "bl", "iz")):
                word += "e"
            elif _double_cons(word) and word[-1] not in "lsz":
                word = word[:-1]
            elif _measure(word) == 1 and _cvc(word):
                word += "e"

    # step 1c: -y -> -i after a vowel
    if word.endswith("y") and _has_vowel(word[:-1]):
        word = word[:-1] + "i"

    word = _map_step(word, _STEP2)
    word = _map_step(word, _STEP3)

    # step 4: drop the longest listed suffix when the stem is long enough
    rule = _longest_rule(word, [(s, "") for s in _STEP4])
    if rule is not None:
        suffix, _ = rule
        stem_part = word[: len(word) - len(suffix)]
        if _measure(stem_part) > 1 and (suffix != "ion" or stem_part.endswith(("s", "t"))):
            word = stem_part

    # step 5a: final -e
    if word.endswith("e"):
        stem_part = word[:-1]
        m = _measure(stem_part)
        if m > 1 or (m == 1 and not _cvc(stem_part)):
            word = stem_part

    # step 5b: -ll -> -l
    if _measure(word) > 1 and _double_cons(word) and word.endswith("l"):
        word = word[:-1]

    return word
