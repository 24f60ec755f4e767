"""Independent brute-force oracles for the accuracy metrics.

These transcribe the estimator definitions literally over explicit pair
enumerations, in plain Python, with no shared code with the package: the
within-group pair classes

  class 1: i has an observed event in (t, t+dt], j survives past t+dt
  class 2: i censored in the window, j survives; weight 1 - pi_i(u | T_i)
  class 3: i has an event, j censored later in the window; weight pi_j(u | T_j)
  class 4: both censored in the window, T_i < T_j;
           weight (1 - pi_i(u | T_i)) * pi_j(u | T_j)

pooled over both groups into one ratio per class (ties get half credit), and
the square-loss prediction error that splits censored-in-window subjects
between the two outcomes by their own survival from the censoring time.
"""


def subject_group(rho, t):
    return "B" if (rho is not None and rho <= t) else "A"


def auc_oracle(subjects, t, dt):
    """subjects: list of dicts with keys T, delta, rho, pi, pi_c (pi_c may be
    None). Returns (auc, [auc1..auc4], [count1..count4]) or None if undefined."""
    u = t + dt
    at_risk = [s for s in subjects if s["T"] > t]
    nums = [0.0, 0.0, 0.0, 0.0]
    masses = [0.0, 0.0, 0.0, 0.0]
    counts = [0, 0, 0, 0]
    for group in ("A", "B"):
        members = [s for s in at_risk if subject_group(s["rho"], t) == group]
        for i in members:
            for j in members:
                if i is j:
                    continue
                if i["pi"] < j["pi"]:
                    conc = 1.0
                elif i["pi"] == j["pi"]:
                    conc = 0.5
                else:
                    conc = 0.0
                i_event = t < i["T"] <= u and i["delta"] == 1
                i_cens = t < i["T"] <= u and i["delta"] == 0
                j_survives = j["T"] > u
                j_cens_after_i = i["T"] < j["T"] <= u and j["delta"] == 0
                if i_event and j_survives:
                    nums[0] += conc
                    masses[0] += 1.0
                    counts[0] += 1
                elif i_cens and j_survives:
                    w = 1.0 - i["pi_c"]
                    nums[1] += conc * w
                    masses[1] += w
                    counts[1] += 1
                elif i_event and j_cens_after_i:
                    w = j["pi_c"]
                    nums[2] += conc * w
                    masses[2] += w
                    counts[2] += 1
                elif i_cens and j_cens_after_i:
                    w = (1.0 - i["pi_c"]) * j["pi_c"]
                    nums[3] += conc * w
                    masses[3] += w
                    counts[3] += 1
    total = sum(masses)
    if total == 0.0:
        return None
    comps = [n / total for n in nums]
    return sum(comps), comps, counts


def pe_oracle(subjects, t, u):
    """Henderson-style square loss at horizon u given information at t."""
    at_risk = [s for s in subjects if s["T"] > t]
    if not at_risk:
        return None
    total = 0.0
    for s in at_risk:
        pi = s["pi"]
        if s["T"] >= u:
            total += (1.0 - pi) ** 2
        elif s["delta"] == 1:
            total += (0.0 - pi) ** 2
        else:
            total += s["pi_c"] * (1.0 - pi) ** 2 + (1.0 - s["pi_c"]) * (0.0 - pi) ** 2
    return total / len(at_risk)
