#!/usr/bin/env python3
"""Regenerates the bundled toy world under data/.

Writes toy_lexicon.csv, inflections.csv and toy_world.json. Output is fully
determined by SEED; rerunning produces byte-identical files.
"""

import csv
import json
import os
import random

SEED = 20240611
HERE = os.path.dirname(os.path.abspath(__file__))
DATA = os.path.join(HERE, "..", "data")

LEVELS = {
    "L1": ("i you we it be do have can must what a the and my your me to with "
           "for about too very yes like eat drink play go see tell good great "
           "nice big fun cat dog food water lunch"),
    "L2": ("how why where when because usually often also enjoy visit cook "
           "read think make help happy favorite wonderful sunny delicious "
           "music game park movie animal weekend family school friend ball"),
    "L3": ("perhaps recently especially probably prefer improve practice "
           "describe explain protect compare travel suggest share interesting "
           "healthy fantastic important different popular confident "
           "traditional opinion experience environment culture festival "
           "challenge habit skill"),
    "L4": ("furthermore particularly consequently analyze evaluate appreciate "
           "elaborate contribute demonstrate enhance inspire influence "
           "facilitate significant sustainable essential innovative remarkable "
           "diverse crucial profound comprehensive independent accomplishment "
           "growth capability approach perspective consequence strategy"),
}

FILLERS = ["um", "uh", "oh", "hmm", "er"]
PROPER = ["anna", "tom", "lily", "paris", "london", "beijing", "china"]

# Irregular forms plus every regular inflection used by the policy vocabulary.
INFLECTIONS = [
    ("am", "be"), ("is", "be"), ("are", "be"), ("was", "be"), ("were", "be"),
    ("been", "be"), ("'m", "be"), ("'re", "be"), ("'s", "be"),
    ("'ve", "have"), ("has", "have"), ("had", "have"), ("'ll", "will"),
    ("'d", "would"), ("n't", "not"), ("does", "do"), ("did", "do"),
    ("done", "do"), ("ate", "eat"), ("eaten", "eat"), ("drank", "drink"),
    ("drunk", "drink"), ("went", "go"), ("gone", "go"), ("saw", "see"),
    ("seen", "see"), ("told", "tell"), ("made", "make"), ("thought", "think"),
    ("better", "good"), ("best", "good"), ("bigger", "big"),
    ("children", "child"), ("mice", "mouse"), ("people", "person"),
    ("men", "man"), ("women", "woman"), ("feet", "foot"), ("teeth", "tooth"),
    ("ran", "run"), ("running", "run"),
    ("cats", "cat"), ("dogs", "dog"), ("likes", "like"), ("liked", "like"),
    ("eats", "eat"), ("eating", "eat"), ("drinks", "drink"),
    ("plays", "play"), ("played", "play"), ("playing", "play"),
    ("visited", "visit"), ("visits", "visit"), ("cooking", "cook"),
    ("cooked", "cook"), ("reading", "read"), ("games", "game"),
    ("movies", "movie"), ("animals", "animal"), ("friends", "friend"),
    ("balls", "ball"), ("habits", "habit"), ("skills", "skill"),
    ("festivals", "festival"), ("challenges", "challenge"),
    ("traveling", "travel"), ("practicing", "practice"),
    ("improved", "improve"), ("strategies", "strategy"),
]

OOV = ["dinosaur", "pizza", "robot", "homework", "spaceship", "broccoli"]
NAMES = ["anna", "tom"]
PUNCT = [".", "!", "?", ","]

TOPICS = ["food", "animals", "school", "hobbies"]

# Topic nouns by level; None-level entries are out-of-list words.
TOPIC_NOUNS = {
    "food": {"L1": ["food", "water", "lunch"], "L2": ["family"],
             "L3": ["habit", "culture"], "L4": ["strategy"],
             "oov": ["pizza", "broccoli"]},
    "animals": {"L1": ["cat", "dog", "cats", "dogs"], "L2": ["animal", "park"],
                "L3": ["environment", "experience"], "L4": ["perspective"],
                "oov": ["dinosaur"]},
    "school": {"L1": ["lunch", "food"], "L2": ["school", "friend", "game"],
               "L3": ["skill", "challenge", "opinion"],
               "L4": ["accomplishment", "approach"], "oov": ["homework"]},
    "hobbies": {"L1": ["dog", "water"], "L2": ["music", "movie", "game", "ball"],
                "L3": ["festival", "skill", "experience"],
                "L4": ["capability", "growth"], "oov": ["robot", "spaceship"]},
}

VERBS = {"L1": ["eat", "drink", "play", "see", "like"],
         "L2": ["enjoy", "visit", "cook", "read", "make"],
         "L3": ["prefer", "improve", "practice", "describe", "share", "compare"],
         "L4": ["analyze", "evaluate", "appreciate", "enhance", "demonstrate"]}
ADJS = {"L1": ["good", "great", "nice", "big", "fun"],
        "L2": ["happy", "wonderful", "sunny", "delicious"],
        "L3": ["interesting", "healthy", "important", "different", "popular"],
        "L4": ["significant", "essential", "remarkable", "diverse", "crucial"]}
REACTIONS = {"L1": ["great", "good", "nice", "yes"], "L2": ["wonderful"],
             "L3": ["fantastic", "interesting"], "L4": ["remarkable"]}
ADVS = {"L1": ["too"], "L2": ["usually", "often", "also"],
        "L3": ["perhaps", "probably", "especially"],
        "L4": ["furthermore", "particularly"]}
QWORDS = {"L1": ["what"], "L2": ["how", "why", "where", "when"], "L3": [], "L4": []}

RANK = {"L1": 1, "L2": 2, "L3": 3, "L4": 4}
LEVEL_NAMES = ["L1", "L2", "L3", "L4"]
SLOT_ESCAPE = 0.18  # chance a slot draws from a higher level or off-list


def pool(table, level, rng, topic=None):
    """Pick a slot filler at or below `level`, escaping upward sometimes."""
    r = RANK[level]
    if rng.random() < SLOT_ESCAPE:
        higher = [w for lv, ws in table.items() if lv in RANK and RANK[lv] > r
                  for w in ws]
        if topic is not None:
            higher += table.get("oov", [])
        if higher:
            return rng.choice(higher)
    # Favor the target level so upper levels carry their own words.
    if rng.random() < 0.6 and table.get(level):
        return rng.choice(table[level])
    ok = [w for lv, ws in table.items() if lv in RANK and RANK[lv] <= r for w in ws]
    return rng.choice(ok)


def reaction(level, rng):
    return [pool(REACTIONS, level, rng), "!"]


def statement(topic, level, rng):
    n = lambda: pool(TOPIC_NOUNS[topic], level, rng, topic)
    v = lambda: pool(VERBS, level, rng)
    a = lambda: pool(ADJS, level, rng)
    adv = lambda: pool(ADVS, level, rng)
    forms = [
        lambda: ["i", "like", n(), "too", "."],
        lambda: [n(), "is", "very", a(), "."],
        lambda: ["we", "can", v(), n(), "with", "my", "friend", "."],
        lambda: ["my", n(), "is", a(), adv(), "."],
        lambda: ["it", "is", a(), "to", v(), n(), "."],
        lambda: ["i", adv(), v(), "the", n(), "with", "my", "family", "."],
        lambda: ["you", "can", v(), "a", a(), n(), "!"],
    ]
    return rng.choice(forms)()


def question(topic, level, rng):
    n = lambda: pool(TOPIC_NOUNS[topic], level, rng, topic)
    v = lambda: pool(VERBS, level, rng)
    a = lambda: pool(ADJS, level, rng)
    forms = [
        lambda: ["do", "you", "like", n(), "?"],
        lambda: ["what", n(), "do", "you", "like", "to", v(), "?"],
        lambda: ["do", "you", v(), n(), "with", "your", "friend", "?"],
        lambda: ["what", "is", "your", a(), n(), "?"],
    ]
    if RANK[level] >= 2:
        forms += [
            lambda: [pool(QWORDS, level, rng), "do", "you", v(), n(), "?"],
            lambda: ["how", "can", "we", v(), "a", a(), n(), "?"],
        ]
    if RANK[level] >= 3:
        forms += [
            lambda: ["what", "is", "your", "opinion", "about", "the", n(), "?"],
            lambda: ["how", "do", "you", v(), "your", n(), "and", n(), "?"],
        ]
    return rng.choice(forms)()


LENGTH = {"L1": (10, 15), "L2": (10, 20), "L3": (20, 30), "L4": (20, 30)}


def response(topic, level, rng):
    lo, hi = LENGTH[level]
    for _ in range(200):
        toks = reaction(level, rng)
        n_stmt = {"L1": 1, "L2": rng.choice([1, 2]), "L3": rng.choice([2, 3]),
                  "L4": rng.choice([2, 3])}[level]
        for _ in range(n_stmt):
            toks += statement(topic, level, rng)
        toks += question(topic, level, rng)
        words = [t for t in toks if t not in PUNCT]
        if lo <= len(words) <= hi:
            return toks
    raise RuntimeError("no template fits %s/%s" % (topic, level))


def render(toks):
    out = ""
    cap = True
    for t in toks:
        if t in PUNCT:
            out += t
            cap = t != ","
            continue
        w = t
        if cap or w == "i" or w in NAMES:
            w = w[0].upper() + w[1:]
        cap = False
        out += (" " if out else "") + w
    return out


STUDENT = {
    "opening": ["I like {n}.", "Yes, I like {n}.", "I have a {n}.",
                "My friend likes {n}.", "I see {n} every day.",
                "Um, I think {n} is good."],
    "middle": ["I play with my {n}.", "We eat lunch at school.",
               "My mom likes {n} too.", "I do not know.",
               "It is fun and big.", "Oh, I like {n} very much."],
    "closing": ["Thank you, Anna.", "I like to talk about {n}.",
                "Yes, it is fun.", "Bye, see you.", "Good, I like it.",
                "Maybe {n} next time."],
}

PROMPTS = {
    "food": "Hi Anna! I want to talk about food. I like {n} for lunch.",
    "animals": "Hello! Let us talk about animals. I have a {n}.",
    "school": "Hi! I want to talk about my school. I like my {n}.",
    "hobbies": "Hello Anna! My hobby is {n}. I like it a lot.",
}


def student_noun(topic, level, rng):
    t = TOPIC_NOUNS[topic]
    ok = [w for lv, ws in t.items() if lv in RANK and RANK[lv] <= RANK[level]
          for w in ws] + t["oov"]
    return rng.choice(ok)


def main():
    rng = random.Random(SEED)
    os.makedirs(DATA, exist_ok=True)

    lemmas = {}
    for lv, words in LEVELS.items():
        for w in words.split():
            assert w not in lemmas, w
            lemmas[w] = lv
    counts = {lv: len(ws.split()) for lv, ws in LEVELS.items()}
    assert counts == {"L1": 40, "L2": 30, "L3": 30, "L4": 30}, counts

    with open(os.path.join(DATA, "toy_lexicon.csv"), "w", newline="") as f:
        f.write("lemma,level\n")
        for lv in LEVEL_NAMES:
            for w in LEVELS[lv].split():
                f.write("%s,%s\n" % (w, lv))
        f.write("#fillers\n")
        for w in FILLERS:
            f.write(w + "\n")
        f.write("#proper\n")
        for w in PROPER:
            f.write(w + "\n")

    with open(os.path.join(DATA, "inflections.csv"), "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(["inflected", "lemma"])
        for row in INFLECTIONS:
            wr.writerow(row)

    infl = dict(INFLECTIONS)
    vocab = []
    for lv in LEVEL_NAMES:
        for w in LEVELS[lv].split():
            if w != "be":
                vocab.append(w)
    extra = ["is", "are", "am", "does", "cats", "dogs", "likes", "eats",
             "drinks", "plays", "played", "playing", "visited", "cooking",
             "reading", "games", "movies", "animals", "friends", "habits",
             "skills", "festivals"]
    for w in extra:
        assert w in infl, w
    vocab += extra + OOV + NAMES + PUNCT
    assert len(set(vocab)) == len(vocab)

    corpus = []
    for topic in TOPICS:
        for lv in LEVEL_NAMES:
            for _ in range(24):
                toks = response(topic, lv, rng)
                for t in toks:
                    assert t in vocab, t
                corpus.append({"topic": topic, "level": lv, "text": render(toks)})

    bank = []
    for topic in TOPICS:
        for lv in LEVEL_NAMES:
            for bucket, forms in STUDENT.items():
                for i, form in enumerate(forms):
                    text = form.format(n=student_noun(topic, lv, rng))
                    bank.append({"topic": topic, "level": lv, "bucket": bucket,
                                 "text": text, "weight": 2.0 if i == 0 else 1.0})

    scenarios = []
    for topic in TOPICS:
        for lv in LEVEL_NAMES:
            noun = TOPIC_NOUNS[topic]["L1"][0]
            scenarios.append({"topic": topic, "level": lv,
                              "prompt": PROMPTS[topic].format(n=noun),
                              "turns": 3})

    world = {
        "topics": TOPICS,
        "levels": LEVEL_NAMES,
        "vocabulary": vocab,
        "echo_probability": 0.3,
        "bank": bank,
        "scenarios": scenarios,
        "base_corpus": corpus,
    }
    with open(os.path.join(DATA, "toy_world.json"), "w") as f:
        json.dump(world, f, indent=1)
        f.write("\n")
    print("vocabulary %d, corpus %d, bank %d, scenarios %d"
          % (len(vocab), len(corpus), len(bank), len(scenarios)))


if __name__ == "__main__":
    main()
