"""Writes synthetic_sleep.csv: 400 rows with the column layout of the public
Sleep Health and Lifestyle dataset, sampled from a hand-written causal model.
Used by the CLI and pipeline tests; it is not the real survey data."""

import csv
import random

OCCUPATIONS = ["Accountant", "Doctor", "Engineer", "Lawyer", "Manager", "Nurse",
               "Sales Representative", "Salesperson", "Scientist", "Software Engineer", "Teacher"]
STRESS_SHIFT = {"Doctor": 1.2, "Nurse": 1.0, "Sales Representative": 1.5, "Salesperson": 1.2,
                "Engineer": -1.0, "Accountant": -0.5, "Lawyer": 0.3, "Teacher": 0.0,
                "Manager": 0.5, "Scientist": 0.2, "Software Engineer": -0.3}


def clip(x, lo, hi):
    return max(lo, min(hi, x))


def main():
    rng = random.Random(20240607)
    rows = []
    for pid in range(1, 401):
        gender = rng.choice(["Male", "Female"])
        weights = [3, 4, 4, 3, 1, 5, 1, 2, 1, 1, 4] if gender == "Male" else [4, 2, 1, 2, 1, 6, 1, 3, 1, 1, 5]
        occupation = rng.choices(OCCUPATIONS, weights)[0]
        age = clip(round(rng.gauss(43 if occupation in ("Manager", "Lawyer") else 38, 7)), 27, 59)
        disorder = rng.choices(["None", "Insomnia", "Sleep Apnea"], [58, 21, 21])[0]
        duration = 7.2 - (0.8 if disorder == "Insomnia" else 0.4 if disorder == "Sleep Apnea" else 0.0)
        duration += -0.15 if gender == "Male" else 0.0
        duration = round(clip(rng.gauss(duration, 0.5), 5.8, 8.5), 1)
        steps = int(round(rng.uniform(3000, 10000), -2))
        activity = int(clip(round(30 + (steps - 3000) / 7000 * 60 + rng.gauss(0, 8)), 30, 90))
        heart = int(round(68 + (3 if disorder == "Insomnia" else 5 if disorder == "Sleep Apnea" else 0) + rng.gauss(0, 3)))
        stress = 5 - 1.5 * (duration - 7) + 0.25 * (heart - 70) + STRESS_SHIFT[occupation] + rng.gauss(0, 1)
        stress = int(clip(round(stress), 3, 8))
        quality = 6 + 1.6 * (duration - 7) - 0.5 * (stress - 5) + 0.01 * (activity - 60) + rng.gauss(0, 0.8)
        quality = int(clip(round(quality), 4, 9))
        bmi_score = -0.04 * (activity - 60) + rng.gauss(0, 1)
        bmi = "Obese" if bmi_score > 1.3 else "Overweight" if bmi_score > 0.3 else rng.choice(["Normal", "Normal Weight"])
        systolic = int(round(115 + (heart - 68) * 1.5 + rng.gauss(0, 4)))
        diastolic = int(round(75 + (heart - 68) + rng.gauss(0, 3)))
        rows.append([pid, gender, age, occupation, duration, quality, activity, stress, bmi,
                     f"{systolic}/{diastolic}", heart, steps, disorder])
    with open("synthetic_sleep.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["Person ID", "Gender", "Age", "Occupation", "Sleep Duration", "Quality of Sleep",
                    "Physical Activity Level", "Stress Level", "BMI Category", "Blood Pressure",
                    "Heart Rate", "Daily Steps", "Sleep Disorder"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
