#!/usr/bin/env python3
"""Regenerates the synthetic fixtures under data/fixtures.

Everything is drawn from a fixed seed, so rerunning produces identical files.
"""
import csv
import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "data" / "fixtures"
rng = random.Random(20240611)

TOPICS = {
    "billing": {
        "open": [
            "Hi, I was charged twice for my subscription this month.",
            "Hello, there is an extra fee on my latest bill.",
            "Why did my payment go up this month?",
            "I think my invoice is wrong, can you check it?",
        ],
        "customer": [
            "The charge was on the third of the month.",
            "It is the card ending in 4821.",
            "Yes, the account is under my name.",
            "How long will the refund take?",
            "Can you send me a copy of the invoice?",
            "I did not sign up for the premium plan.",
        ],
        "agent": [
            "I can see the duplicate charge on your account and I will refund it today.",
            "Let me check the invoice for you, could you confirm the email on the account?",
            "The refund usually takes three to five business days to appear on your statement.",
            "I have removed the premium plan and adjusted your next bill.",
            "I will email you a copy of the corrected invoice right now.",
            "Please confirm the last four digits of the card so I can verify the payment.",
            "The extra fee comes from a late payment, but I can waive it this time.",
            "Your plan renewed at the new price, I can switch you back to the old rate.",
        ],
    },
    "delivery": {
        "open": [
            "My package has not arrived yet.",
            "Where is my order? It was due yesterday.",
            "The tracking page has not updated for a week.",
            "I received the wrong item in my parcel.",
        ],
        "customer": [
            "The order number is 55-1092.",
            "I live in a flat, maybe the courier could not get in.",
            "Can you send a replacement instead?",
            "I would rather have my money back.",
            "Nobody left a note at the door.",
            "The box was damaged when it arrived.",
        ],
        "agent": [
            "I am sorry for the delay, let me track the parcel with the courier.",
            "The courier shows the parcel at your local depot, it should arrive tomorrow.",
            "I have arranged a replacement and it will ship today with express delivery.",
            "I have started a refund for the order, you will get an email confirmation.",
            "Could you share a photo of the damaged box so I can file a claim?",
            "I will ask the courier to call you before the next delivery attempt.",
            "Please return the wrong item with the prepaid label I am sending you.",
            "Thanks for the order number, I can see the shipment left the warehouse on Monday.",
        ],
    },
    "password": {
        "open": [
            "I cannot log in to my account.",
            "I forgot my password and the reset link does not work.",
            "My account is locked after too many attempts.",
            "The app keeps asking me to sign in again.",
        ],
        "customer": [
            "I tried the reset link twice already.",
            "My username is the same as my email.",
            "I do not receive the verification code.",
            "It says the link has expired.",
            "I changed my phone number last month.",
            "Okay, I will try again now.",
        ],
        "agent": [
            "I have unlocked your account, please try to log in again.",
            "I sent a new reset link to your email, it will expire in one hour.",
            "Please check your spam folder for the verification code.",
            "I updated the phone number on your account so the code reaches you.",
            "Clear the app cache and sign in again, that usually fixes the loop.",
            "For security I need to verify your identity, can you confirm your date of birth?",
            "The reset link expired, I will generate a new one for you now.",
            "Your password was changed successfully, you can sign in with it now.",
        ],
    },
    "internet": {
        "open": [
            "My internet keeps dropping every evening.",
            "The broadband speed is much slower than promised.",
            "My router lights are flashing red.",
            "I have no connection at all since this morning.",
        ],
        "customer": [
            "I already restarted the router.",
            "All the cables are plugged in.",
            "It happens on every device in the house.",
            "Is there an outage in my area?",
            "Can an engineer visit this week?",
            "The speed test shows two megabits.",
        ],
        "agent": [
            "I can see an outage in your area and our engineers are fixing it now.",
            "Please restart the router and wait five minutes for the lights to settle.",
            "I ran a line test and found a fault, I will book an engineer visit.",
            "The engineer can visit on Thursday morning, does that work for you?",
            "Try connecting a laptop with a cable so we can check the speed directly.",
            "I have reset your line from our side, the speed should improve within an hour.",
            "A red light means the router lost sync, I will send you a new router.",
            "I will credit your account for the days without service.",
        ],
    },
    "booking": {
        "open": [
            "I need to change my booking to next week.",
            "Can I cancel my reservation?",
            "I want to add another guest to my booking.",
            "My booking confirmation never arrived.",
        ],
        "customer": [
            "The booking reference is KX42.",
            "It is for two nights in May.",
            "Is there a fee for the change?",
            "Please send the confirmation to my work email.",
            "We would like a room with a sea view.",
            "Thanks, that sounds good.",
        ],
        "agent": [
            "I have moved your booking to next week and sent a new confirmation.",
            "You can cancel without a fee until forty eight hours before arrival.",
            "I added the extra guest and updated the price on your booking.",
            "I resent the confirmation, please check your inbox in a few minutes.",
            "A room with a sea view is available, I can upgrade you for a small fee.",
            "The change is free this time, I have waived the fee for you.",
            "Could you confirm the booking reference so I can find the reservation?",
            "Your reservation is cancelled and the deposit will be refunded.",
        ],
    },
}

CLOSINGS_CUSTOMER = ["Thank you for your help.", "Great, thanks.", "That is all for today.", "Perfect, thank you."]
CLOSINGS_AGENT = [
    "You are welcome, have a great day.",
    "Happy to help, let us know if you need anything else.",
    "Thanks for contacting us, take care.",
    "Glad I could help, enjoy the rest of your day.",
]


def conversation(cid, topic, n_turns):
    t = TOPICS[topic]
    turns = [{"speaker": "customer", "text": rng.choice(t["open"])}]
    agent_pool = t["agent"][:]
    rng.shuffle(agent_pool)
    cust_pool = t["customer"][:]
    rng.shuffle(cust_pool)
    while len(turns) < n_turns - 2:
        if turns[-1]["speaker"] == "customer":
            turns.append({"speaker": "agent", "text": agent_pool.pop() if agent_pool else rng.choice(t["agent"])})
        else:
            turns.append({"speaker": "customer", "text": cust_pool.pop() if cust_pool else rng.choice(t["customer"])})
    if turns[-1]["speaker"] == "agent":
        turns.append({"speaker": "customer", "text": rng.choice(CLOSINGS_CUSTOMER)})
        turns.append({"speaker": "agent", "text": rng.choice(CLOSINGS_AGENT)})
    else:
        turns.append({"speaker": "agent", "text": agent_pool.pop() if agent_pool else rng.choice(t["agent"])})
        turns.append({"speaker": "customer", "text": rng.choice(CLOSINGS_CUSTOMER)})
        turns.append({"speaker": "agent", "text": rng.choice(CLOSINGS_AGENT)})
    return {"id": cid, "turns": turns}


def ten_turn_fixture():
    # long turns so a 64-token cap forces truncation
    texts = [
        ("customer", "Hello, I have been waiting for my order for almost two weeks now and the tracking page has not changed at all since it left the warehouse."),
        ("agent", "I am sorry to hear that, could you share the order number so I can look at the shipment with the courier?"),
        ("customer", "Sure, the order number is 55-1092 and it was placed on the second of the month with express delivery."),
        ("agent", "Thanks, I can see the parcel was scanned at the regional depot but it has not moved since Tuesday."),
        ("customer", "That is really frustrating because I paid extra for express delivery and I needed the item for a birthday."),
        ("agent", "I understand, I will refund the express delivery fee and ask the depot to prioritise your parcel."),
        ("customer", "Okay, and what happens if it still does not arrive by Friday?"),
        ("agent", "If it is not with you by Friday I will send a replacement from the warehouse the same day."),
        ("customer", "Alright, thank you for sorting this out."),
        ("agent", "You are welcome, I will email you an update as soon as the courier confirms the delivery slot."),
    ]
    return {"id": "fixture-10-turns", "turns": [{"speaker": s, "text": t} for s, t in texts]}


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")


def sample_ids(conv):
    ids = []
    for i, t in enumerate(conv["turns"]):
        if t["speaker"] == "agent" and i > 0:
            ids.append(f'{conv["id"]}#{i}')
    return ids


# ---------------------------------------------------------------------------
# CoLA-format acceptability data

NOUNS = ["customer", "agent", "courier", "engineer", "manager", "parcel", "invoice", "router", "booking", "refund"]
PLURALS = {n: n + "s" for n in NOUNS}
VERBS_PAST = ["checked", "sent", "found", "fixed", "cancelled", "updated", "confirmed", "moved", "opened", "returned"]
ADJS = ["new", "late", "broken", "small", "urgent", "wrong", "quick", "old"]
ADVS = ["quickly", "carefully", "today", "again", "yesterday"]
OOD_SUBJECTS = ["the teacher", "a student", "the children", "my neighbour", "the old farmer", "a poet"]
OOD_VERBS = ["read", "painted", "wrote", "carried", "watched", "borrowed"]
OOD_OBJECTS = ["a long letter", "the red fence", "three books", "the heavy box", "a strange poem", "the evening news"]


def good_sentence(ood=False):
    if ood:
        return f"{rng.choice(OOD_SUBJECTS).capitalize()} {rng.choice(OOD_VERBS)} {rng.choice(OOD_OBJECTS)}."
    form = rng.randrange(4)
    n1, n2 = rng.choice(NOUNS), rng.choice(NOUNS)
    v = rng.choice(VERBS_PAST)
    if form == 0:
        return f"The {n1} {v} the {n2}."
    if form == 1:
        return f"The {rng.choice(ADJS)} {n1} {v} the {n2} {rng.choice(ADVS)}."
    if form == 2:
        return f"The {PLURALS[n1]} were {v} {rng.choice(ADVS)}."
    return f"The {n1} was {v} by the {n2}."


def bad_sentence(ood=False):
    words = good_sentence(ood).rstrip(".").split()
    kind = rng.randrange(4)
    if kind == 0:
        rng.shuffle(words)
    elif kind == 1:
        i = rng.randrange(len(words))
        words.insert(i, words[i])
    elif kind == 2 and "were" in words:
        words[words.index("were")] = "was"
        words[1] = words[1] + "s" if not words[1].endswith("s") else words[1]
    else:
        i = rng.randrange(len(words) - 1)
        words[i], words[i + 1] = words[i + 1], words[i]
    s = " ".join(words)
    return s[0].upper() + s[1:] + "."


def cola_rows(n, source, ood=False):
    rows = []
    for _ in range(n):
        if rng.random() < 0.5:
            rows.append((source, 1, "", good_sentence(ood)))
        else:
            rows.append((source, 0, "*", bad_sentence(ood)))
    return rows


def write_tsv(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, delimiter="\t", lineterminator="\n")
        for r in rows:
            w.writerow(r)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    topics = sorted(TOPICS)
    convs = []
    for i in range(80):
        convs.append(conversation(f"conv-{i:03d}", topics[i % len(topics)], rng.choice([6, 7, 8, 9, 10])))
    convs.append(ten_turn_fixture())
    write_jsonl(OUT / "transcripts.jsonl", convs)

    # a few malformed records to exercise the ingestion report
    write_jsonl(OUT / "transcripts_with_errors.jsonl", convs[:3] + [
        {"id": "bad-speaker", "turns": [{"speaker": "bot", "text": "hi"}, {"speaker": "agent", "text": "hello"}]},
        {"id": "one-turn", "turns": [{"speaker": "agent", "text": "hello"}]},
        {"turns": []},
    ])

    # response pairs for BLEU checks: identical, perturbed and unrelated
    responses = sorted({t["text"] for c in convs for t in c["turns"] if t["speaker"] == "agent"})
    pairs = []
    for k in range(200):
        ref = rng.choice(responses)
        kind = k % 4
        if kind == 0:
            cand = ref
        elif kind == 1:
            words = ref.split()
            del words[rng.randrange(len(words))]
            cand = " ".join(words)
        elif kind == 2:
            words = ref.split()
            i = rng.randrange(len(words) - 1)
            words[i], words[i + 1] = words[i + 1], words[i]
            cand = " ".join(words)
        else:
            cand = rng.choice(responses)
        pairs.append({"candidate": cand, "reference": ref})
    write_jsonl(OUT / "response_pairs.jsonl", pairs)

    write_tsv(OUT / "cola_train.tsv", cola_rows(600, "syn1"))
    write_tsv(OUT / "cola_dev.tsv", cola_rows(150, "syn1"))
    write_tsv(OUT / "cola_test_in_domain.tsv", cola_rows(150, "syn1"))
    write_tsv(OUT / "cola_test_out_of_domain.tsv", cola_rows(150, "syn2", ood=True))

    ids = [sid for c in convs for sid in sample_ids(c)]
    chosen = sorted(rng.sample(ids, 200))
    approaches = ["only_context", "context_and_control", "context_control_sampling", "rl_finetuned"]
    base = {"only_context": 3.0, "context_and_control": 3.4, "context_control_sampling": 3.6, "rl_finetuned": 3.8}
    with open(OUT / "human_labels.csv", "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["sample_id", "annotator_id", "approach", "semantic_similarity", "textual_entailment",
                    "expression_diversity", "fluency"])
        for a in approaches:
            for sid in chosen:
                for ann in ("ann1", "ann2"):
                    w.writerow([sid, ann, a] + [min(5, max(1, round(rng.gauss(base[a], 1.0)))) for _ in range(4)])


if __name__ == "__main__":
    main()
