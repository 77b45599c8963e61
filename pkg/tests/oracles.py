"""Independent reference implementations the suite checks the product against.

These deliberately share no code with the production paths they verify.
"""

from reviewkit.textspan import SpanEdit


def lcs_table(a: str, b: str):
    n, m = len(a), len(b)
    table = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        row, below = table[i], table[i + 1]
        for j in range(m - 1, -1, -1):
            if a[i] == b[j]:
                row[j] = below[j + 1] + 1
            else:
                row[j] = max(below[j], row[j + 1])
    return table


def lcs_diff(a: str, b: str) -> list[SpanEdit]:
    """Dynamic-programming LCS differ: minimal span edits turning a into b."""
    table = lcs_table(a, b)
    edits: list[SpanEdit] = []
    i = j = 0
    start_i = start_j = 0
    in_edit = False

    def flush(end_i, end_j):
        nonlocal in_edit
        if in_edit:
            edits.append(SpanEdit(start_i, end_i, b[start_j:end_j]))
            in_edit = False

    while i < len(a) and j < len(b):
        if a[i] == b[j]:
            flush(i, j)
            i += 1
            j += 1
        else:
            if not in_edit:
                start_i, start_j = i, j
                in_edit = True
            if table[i + 1][j] >= table[i][j + 1]:
                i += 1
            else:
                j += 1
    if i < len(a) or j < len(b):
        if not in_edit:
            start_i, start_j = i, j
            in_edit = True
        i, j = len(a), len(b)
    flush(i, j)
    return edits


def brute_force_order(entries, weights=(10.0, 5.0, 1.0), cap=10):
    """Reference queue ordering from the stated formula, computed from scratch.

    entries: iterables of (submission_id, filter_hits, active_count,
    pending_propagations, similarity, ingest_ordinal).
    """
    w_f, w_p, w_s = weights
    scored = []
    for sid, hits, active, pending, similarity, ordinal in entries:
        denominator = max(1, min(active, cap))
        value = (
            w_f * (hits / denominator)
            + w_p * min(1, pending)
            + w_s * similarity
        )
        scored.append((sid, value, ordinal))
    scored.sort(key=lambda t: (-t[1], t[2]))
    return [sid for sid, _, _ in scored]


def scan_rule_targets(rule_table, submissions: dict[str, str], tag: str) -> set[str]:
    """Brute-force rule-table scan: ids of codes the tagged rule fires on."""
    out = set()
    for sid, code in submissions.items():
        for match in rule_table.match(code):
            if match.rule.issue_tag == tag:
                out.add(sid)
    return out
