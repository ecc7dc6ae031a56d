#!/usr/bin/env python3
"""Writes the synthetic 500-row sample corpus to data/sample.

Deterministic: the same seed always yields byte-identical files.
Every field is non-empty, so each row renders a fixed number of documents
(faculty 2, prerequisites 2, course_schedule 2, qa 1).
"""

import argparse
import csv
import json
import random
from pathlib import Path

FIRST = ["Amina", "Rafiq", "Nusrat", "Tanvir", "Farhana", "Imran", "Sadia", "Kamal", "Laila", "Mahmud",
         "Nadia", "Omar", "Priya", "Rashed", "Sabrina", "Tariq", "Umme", "Wasif", "Yasmin", "Zahid"]
LAST = ["Rahman", "Hossain", "Chowdhury", "Islam", "Ahmed", "Karim", "Sultana", "Haque", "Akter", "Siddiqui"]
DESIGNATIONS = ["Lecturer", "Senior Lecturer", "Assistant Professor", "Associate Professor", "Professor"]
STATUSES = ["Full-time", "Part-time", "On leave"]
DEPTS = ["CSE", "MAT", "PHY", "EEE", "ENG", "BUS"]
DAYS = ["Sunday", "Monday", "Tuesday", "Wednesday", "Thursday", "Saturday"]
TIMES = ["08:00-09:20", "09:30-10:50", "11:00-12:20", "12:30-13:50", "14:00-15:20", "15:30-16:50"]

SERVICES = [
    ("the registrar's office", "is on the ground floor of building 1 and opens from 9am to 5pm"),
    ("the central library", "lends up to five books for two weeks with a valid student ID"),
    ("the counselling unit", "offers free confidential sessions that can be booked by email"),
    ("the IT help desk", "resets portal passwords at room 4G and through the ticket system"),
    ("the medical centre", "provides first aid and a duty doctor on weekdays"),
    ("the career services office", "runs CV reviews every Tuesday and posts internships on the portal"),
    ("the scholarship office", "reviews merit scholarship applications at the start of each semester"),
    ("the accounts office", "accepts tuition payments by bank transfer or at the campus booth"),
    ("the student affairs office", "approves club events submitted at least ten days in advance"),
    ("the language centre", "teaches remedial English courses for incoming students"),
]
QUESTION_FORMS = [
    "Where can I find {s}?",
    "What does {s} do?",
    "How do I contact {s}?",
    "When is {s} open?",
    "Who should I ask about {s}?",
    "What services does {s} offer?",
    "Is {s} available to first-year students?",
    "How can I book an appointment with {s}?",
    "Does {s} help with urgent problems?",
    "What documents does {s} need from me?",
]


def faculty(rng):
    rows, used = [], set()
    while len(rows) < 100:
        first, last = rng.choice(FIRST), rng.choice(LAST)
        initial = (first[0] + last[0] + rng.choice("ABCDEFGHJKLMNPRSTUVWXYZ")).upper()
        if initial in used:
            continue
        used.add(initial)
        rows.append({
            "Initial": initial,
            "Name": f"{first} {last}",
            "Designation": rng.choice(DESIGNATIONS),
            "Status": rng.choice(STATUSES),
            "Room": f"{rng.randint(1, 12)}{rng.choice('ABCDEFGH')}-{rng.randint(1, 30):02d}",
            "Email": f"{first.lower()}.{last.lower()}.{initial.lower()}@university.edu",
        })
    return rows


def course_codes(rng, n):
    codes = set()
    while len(codes) < n:
        codes.add(f"{rng.choice(DEPTS)}{rng.randint(1, 4)}{rng.randint(0, 9)}{rng.randint(0, 9)}")
    return sorted(codes)


def prerequisites(rng, courses):
    rows = []
    for i, course in enumerate(courses[:100]):
        pool = courses[:i] or ["MAT110"]
        direct = rng.sample(pool, k=min(len(pool), rng.randint(1, 2)))
        chain = [course] + direct + rng.sample(pool, k=min(len(pool), rng.randint(0, 2)))
        rows.append({
            "Course": course,
            "Pre-Requisite": ", ".join(f"{d} ({rng.choice(['HP', 'SP'])})" for d in direct),
            "Full Chain": "--".join(dict.fromkeys(chain)),
        })
    return rows


def schedule(rng, courses, fac):
    rows = []
    for course in courses[:100]:
        for section in (1, 2):
            rows.append({
                "Course": course,
                "Section": str(section),
                "Faculty": rng.choice(fac)["Initial"],
                "Day": rng.choice(DAYS),
                "Time": rng.choice(TIMES),
                "Room": f"{rng.randint(1, 12)}{rng.choice('ABCDEFGH')}-{rng.randint(1, 30):02d}",
            })
    return rows


def qa(rng):
    rows = []
    for s, fact in SERVICES:
        for form in QUESTION_FORMS:
            rows.append({"Question": form.format(s=s), "Answer": f"{s[0].upper() + s[1:]} {fact}."})
    rng.shuffle(rows)
    return rows


def write(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0].keys()), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data" / "sample"))
    ap.add_argument("--seed", type=int, default=2025)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    fac = faculty(rng)
    courses = course_codes(rng, 100)
    tables = [
        ("faculty", "faculty.csv", ["Initial"], fac),
        ("prerequisites", "prerequisites.csv", ["Course"], prerequisites(rng, courses)),
        ("course_schedule", "course_schedule.csv", ["Course", "Section"], schedule(rng, courses, fac)),
        ("qa", "qa.csv", ["Question"], qa(rng)),
    ]
    manifest = []
    for name, file, key, rows in tables:
        write(out / file, rows)
        manifest.append({"table": name, "file": file, "key": key})
    (out / "corpus.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {sum(len(t[3]) for t in tables)} rows to {out}")


if __name__ == "__main__":
    main()
