"""Boundary-check decision kernels.

The six-check pipeline's arithmetic lives here, written over interned
integer ids and packed numpy arrays so numba can compile it and so a call
crosses the Python/native boundary with as few arguments as possible.
Strings are interned by the engine: certificate-time vocabulary gets ids
[0, vocab_n); ids at or above vocab_n are runtime-novel strings and are
members of no certificate set.

Packed policy layout (static per certificate, built by CompiledPolicy):

  pol[0..7]   t_issue, t_expire, vocab_n, level_all, n3, n4, nt, min_samples
  pol[8:]     check-3 rows (kind, action, limit, wstart, wend, mask_any),
              then check-4 rows (limit, window, action, mask_any),
              then trigger rows (kind, ref, ppm, window, max_count,
              max_sum, mask_any), each block column-major by field

  masks       bool[1 + n3 + n4 + 2*nt, max(vocab,1)]
              row 0 level, rows 1.. check-3 sets, then check-4 scopes,
              then trigger known-sets, then trigger composition scopes

Mutable session state:

  ev_ts/ev_type/ev_amount/ev_len   append-only log of committed operations
  wstate                           [c4_sum | c4_head | tr_count | tr_sum | tr_head]
  b_count, b_stats                 per-op-type Welford baseline
                                   (b_stats[0]=mean, b_stats[1]=m2)

Verdict codes: 0 ALLOWED, 1 BLOCKED, 2 ESCALATED.
Reason categories: 1 certificate sub-check (1 signature / 2 temporal /
3 identity), 2 level, 3 constraint, 4 anomaly, 5 trigger. Constraint
reason indices >= 1_000_000 refer to windowed (check 4) rows.

Semantics pinned here (and mirrored by the reference evaluators):
  * Checks 1 and 2 are hard gates; failing stops the pipeline.
  * A violated BLOCK constraint anywhere in checks 3-4 blocks, full stop.
    Escalation signals (ESCALATE-action violations, anomaly flags, fired
    triggers) never preempt later BLOCK checks: they are collected and
    only produce ESCALATED after checks 3-5 all declined to block, so a
    blocked operation can never be laundered into a human approval.
  * checks_executed is the index of the blocking check, or 6.
  * Aggregates and the baseline move only when an operation commits
    (allowed now, or approved later): blocked traffic consumes no budget.

Each kernel is self-contained so its compiled and plain-Python forms are
the same source. @njit applies when numba is importable;
AITH_DISABLE_NUMBA=1 selects the plain interpretation. The *_py names
always point at the uncompiled functions for differential tests and the
kernel comparison benchmark.
"""

from __future__ import annotations

import math

from ._accel import USING_NUMBA, njit

ALLOWED = 0
BLOCKED = 1
ESCALATED = 2

CAT_NONE = 0
CAT_CERT = 1
CAT_LEVEL = 2
CAT_CONSTRAINT = 3
CAT_ANOMALY = 4
CAT_TRIGGER = 5

WINDOWED_BASE = 1_000_000  # reason_idx offset for check-4 constraint rows

# ConstraintKind / TriggerKind values, duplicated as plain ints for numba.
K_AMOUNT = 1
K_AGGREGATE = 2
K_ASSET_ALLOW = 3
K_ASSET_DENY = 4
K_TYPE_DENY = 5
K_TIME_WINDOW = 6
K_DEST_ALLOW = 7
T_THRESHOLD = 1
T_NOVELTY = 2
T_COMPOSITION = 3

PPM = 1_000_000
DAY = 86_400

# pol header slots
H_T_ISSUE = 0
H_T_EXPIRE = 1
H_VOCAB = 2
H_LEVEL_ALL = 3
H_N3 = 4
H_N4 = 5
H_NT = 6
H_MIN_SAMPLES = 7
H_LEN = 8


def _advance(ts, pol, masks, ev_ts, ev_type, ev_amount, ev_len, wstate):
    """Expire committed events that fell out of each sliding window at ts."""
    vocab_n = pol[H_VOCAB]
    n3 = pol[H_N3]
    n4 = pol[H_N4]
    nt = pol[H_NT]
    o4 = H_LEN + 6 * n3
    ot = o4 + 4 * n4
    n = ev_len[0]
    for i in range(n4):
        cutoff = ts - pol[o4 + n4 + i]  # window seconds
        h = wstate[n4 + i]
        mask_any = pol[o4 + 3 * n4 + i]
        row = 1 + n3 + i
        while h < n and ev_ts[h] <= cutoff:
            t = ev_type[h]
            if mask_any == 1 or (t < vocab_n and masks[row, t]):
                wstate[i] -= ev_amount[h]
            h += 1
        wstate[n4 + i] = h
    for j in range(nt):
        if pol[ot + j] == T_COMPOSITION:
            cutoff = ts - pol[ot + 3 * nt + j]
            h = wstate[2 * n4 + 2 * nt + j]
            mask_any = pol[ot + 6 * nt + j]
            row = 1 + n3 + n4 + nt + j
            while h < n and ev_ts[h] <= cutoff:
                t = ev_type[h]
                if mask_any == 1 or (t < vocab_n and masks[row, t]):
                    wstate[2 * n4 + j] -= 1
                    wstate[2 * n4 + nt + j] -= ev_amount[h]
                h += 1
            wstate[2 * n4 + 2 * nt + j] = h


def _commit(ts, type_id, amount, has_amount, pol, masks,
            ev_ts, ev_type, ev_amount, ev_len, wstate, b_count, b_stats):
    """Record a committed operation (in timestamp order) in all aggregates."""
    vocab_n = pol[H_VOCAB]
    n3 = pol[H_N3]
    n4 = pol[H_N4]
    nt = pol[H_NT]
    o4 = H_LEN + 6 * n3
    ot = o4 + 4 * n4
    amt = amount if has_amount == 1 else 0
    idx = ev_len[0]
    ev_ts[idx] = ts
    ev_type[idx] = type_id
    ev_amount[idx] = amt
    ev_len[0] = idx + 1
    for i in range(n4):
        if pol[o4 + 3 * n4 + i] == 1 or (
            type_id < vocab_n and masks[1 + n3 + i, type_id]
        ):
            wstate[i] += amt
    for j in range(nt):
        if pol[ot + j] == T_COMPOSITION:
            if pol[ot + 6 * nt + j] == 1 or (
                type_id < vocab_n and masks[1 + n3 + n4 + nt + j, type_id]
            ):
                wstate[2 * n4 + j] += 1
                wstate[2 * n4 + nt + j] += amt
    if has_amount == 1:
        cnt = b_count[type_id] + 1
        delta = amount - b_stats[0, type_id]
        mean = b_stats[0, type_id] + delta / cnt
        b_count[type_id] = cnt
        b_stats[0, type_id] = mean
        b_stats[1, type_id] = b_stats[1, type_id] + delta * (amount - mean)


def _decide(
    now, ts, type_id, has_amount, amount, asset_id, dest_id,
    sig_ok, identity_ok, commit_on_allow, k_sigma,
    pol, masks,
    ev_ts, ev_type, ev_amount, ev_len, wstate, b_count, b_stats,
):
    """Run the six checks for one operation.

    Returns (verdict, failed_check, reason_cat, reason_idx, checks_executed, z).
    failed_check is 0 when no check blocked.
    """
    esc_cat = 0
    esc_idx = -1
    esc_z = 0.0
    vocab_n = pol[H_VOCAB]
    n3 = pol[H_N3]
    n4 = pol[H_N4]
    nt = pol[H_NT]
    o3 = H_LEN
    o4 = o3 + 6 * n3
    ot = o4 + 4 * n4

    # check 1: certificate validity (signature result cached by the engine)
    if sig_ok != 1:
        return (BLOCKED, 1, CAT_CERT, 1, 1, 0.0)
    if now < pol[H_T_ISSUE] or now >= pol[H_T_EXPIRE]:
        return (BLOCKED, 1, CAT_CERT, 2, 1, 0.0)
    if identity_ok != 1:
        return (BLOCKED, 1, CAT_CERT, 3, 1, 0.0)

    # check 2: delegation level
    if pol[H_LEVEL_ALL] != 1:
        if type_id >= vocab_n or not masks[0, type_id]:
            return (BLOCKED, 2, CAT_LEVEL, type_id, 2, 0.0)

    # check 3: per-operation constraints
    tod = ts % DAY
    for i in range(n3):
        kind = pol[o3 + i]
        violated = False
        if kind == K_AMOUNT:
            if has_amount == 1 and (
                pol[o3 + 5 * n3 + i] == 1
                or (type_id < vocab_n and masks[1 + i, type_id])
            ):
                violated = amount > pol[o3 + 2 * n3 + i]
        elif kind == K_ASSET_ALLOW:
            if asset_id >= 0:
                violated = not (asset_id < vocab_n and masks[1 + i, asset_id])
        elif kind == K_ASSET_DENY:
            if asset_id >= 0:
                violated = asset_id < vocab_n and masks[1 + i, asset_id]
        elif kind == K_TYPE_DENY:
            violated = type_id < vocab_n and masks[1 + i, type_id]
        elif kind == K_TIME_WINDOW:
            ws = pol[o3 + 3 * n3 + i]
            we = pol[o3 + 4 * n3 + i]
            if ws < we:
                violated = not (ws <= tod < we)
            else:
                violated = not (tod >= ws or tod < we)
        elif kind == K_DEST_ALLOW:
            if dest_id >= 0:
                violated = not (dest_id < vocab_n and masks[1 + i, dest_id])
        if violated:
            if pol[o3 + n3 + i] == 1:  # BLOCK action
                return (BLOCKED, 3, CAT_CONSTRAINT, i, 3, 0.0)
            if esc_cat == 0:
                esc_cat = CAT_CONSTRAINT
                esc_idx = i

    # check 4: windowed aggregate limits; first expire stale events
    n = ev_len[0]
    for i in range(n4):
        cutoff = ts - pol[o4 + n4 + i]
        h = wstate[n4 + i]
        mask_any = pol[o4 + 3 * n4 + i]
        row = 1 + n3 + i
        while h < n and ev_ts[h] <= cutoff:
            t = ev_type[h]
            if mask_any == 1 or (t < vocab_n and masks[row, t]):
                wstate[i] -= ev_amount[h]
            h += 1
        wstate[n4 + i] = h
    for j in range(nt):
        if pol[ot + j] == T_COMPOSITION:
            cutoff = ts - pol[ot + 3 * nt + j]
            h = wstate[2 * n4 + 2 * nt + j]
            mask_any = pol[ot + 6 * nt + j]
            row = 1 + n3 + n4 + nt + j
            while h < n and ev_ts[h] <= cutoff:
                t = ev_type[h]
                if mask_any == 1 or (t < vocab_n and masks[row, t]):
                    wstate[2 * n4 + j] -= 1
                    wstate[2 * n4 + nt + j] -= ev_amount[h]
                h += 1
            wstate[2 * n4 + 2 * nt + j] = h
    if has_amount == 1:
        for i in range(n4):
            if pol[o4 + 3 * n4 + i] == 1 or (
                type_id < vocab_n and masks[1 + n3 + i, type_id]
            ):
                if wstate[i] + amount > pol[o4 + i]:
                    if pol[o4 + 2 * n4 + i] == 1:  # BLOCK action
                        return (BLOCKED, 4, CAT_CONSTRAINT, WINDOWED_BASE + i, 4, 0.0)
                    if esc_cat == 0:
                        esc_cat = CAT_CONSTRAINT
                        esc_idx = WINDOWED_BASE + i

    # check 5: anomaly vs behavioral baseline (cold start defers to novelty)
    if has_amount == 1 and b_count[type_id] >= pol[H_MIN_SAMPLES]:
        mean = b_stats[0, type_id]
        var = b_stats[1, type_id] / b_count[type_id]
        dev = abs(amount - mean)
        if var > 0.0:
            std = math.sqrt(var)
            if dev > k_sigma * std and esc_cat == 0:
                esc_cat = CAT_ANOMALY
                esc_idx = type_id
                esc_z = dev / std
        elif dev > 0.0 and esc_cat == 0:
            esc_cat = CAT_ANOMALY
            esc_idx = type_id
            esc_z = math.inf

    # check 6: escalation triggers (never blocks)
    for j in range(nt):
        fired = False
        kind = pol[ot + j]
        if kind == T_THRESHOLD:
            r = pol[ot + nt + j]
            if has_amount == 1 and (
                pol[o4 + 3 * n4 + r] == 1
                or (type_id < vocab_n and masks[1 + n3 + r, type_id])
            ):
                after = wstate[r] + amount
                if after <= pol[o4 + r] and after * PPM >= pol[ot + 2 * nt + j] * pol[o4 + r]:
                    fired = True
        elif kind == T_NOVELTY:
            fired = not (type_id < vocab_n and masks[1 + n3 + n4 + j, type_id])
        elif kind == T_COMPOSITION:
            if pol[ot + 6 * nt + j] == 1 or (
                type_id < vocab_n and masks[1 + n3 + n4 + nt + j, type_id]
            ):
                cnt = wstate[2 * n4 + j] + 1
                sm = wstate[2 * n4 + nt + j] + (amount if has_amount == 1 else 0)
                if pol[ot + 4 * nt + j] >= 0 and cnt > pol[ot + 4 * nt + j]:
                    fired = True
                if pol[ot + 5 * nt + j] >= 0 and sm > pol[ot + 5 * nt + j]:
                    fired = True
        if fired and esc_cat == 0:
            esc_cat = CAT_TRIGGER
            esc_idx = j

    if esc_cat != 0:
        return (ESCALATED, 0, esc_cat, esc_idx, 6, esc_z)

    if commit_on_allow == 1:
        amt = amount if has_amount == 1 else 0
        idx = ev_len[0]
        ev_ts[idx] = ts
        ev_type[idx] = type_id
        ev_amount[idx] = amt
        ev_len[0] = idx + 1
        for i in range(n4):
            if pol[o4 + 3 * n4 + i] == 1 or (
                type_id < vocab_n and masks[1 + n3 + i, type_id]
            ):
                wstate[i] += amt
        for j in range(nt):
            if pol[ot + j] == T_COMPOSITION:
                if pol[ot + 6 * nt + j] == 1 or (
                    type_id < vocab_n and masks[1 + n3 + n4 + nt + j, type_id]
                ):
                    wstate[2 * n4 + j] += 1
                    wstate[2 * n4 + nt + j] += amt
        if has_amount == 1:
            cnt = b_count[type_id] + 1
            delta = amount - b_stats[0, type_id]
            mean = b_stats[0, type_id] + delta / cnt
            b_count[type_id] = cnt
            b_stats[0, type_id] = mean
            b_stats[1, type_id] = b_stats[1, type_id] + delta * (amount - mean)
    return (ALLOWED, 0, CAT_NONE, -1, 6, 0.0)


def _decide_batch(
    op_ts, op_type_id, op_has_amount, op_amount, op_asset_id, op_dest_id,
    k_sigma, pol, masks,
    ev_ts, ev_type, ev_amount, ev_len, wstate, b_count, b_stats,
    out_verdict, out_failed, out_cat, out_idx, out_checks,
):
    """Evaluate a timestamp-ordered operation stream, committing allowed ops.

    The per-operation loop runs entirely inside the kernel; this is the
    single-core throughput path. Certificate signature and agent identity
    are treated as cached-good, i.e. the hot-path configuration.
    """
    for k in range(op_ts.shape[0]):
        verdict, failed, cat, idx, checks, _z = decide(
            op_ts[k], op_ts[k], op_type_id[k], op_has_amount[k], op_amount[k],
            op_asset_id[k], op_dest_id[k], 1, 1, 1, k_sigma,
            pol, masks,
            ev_ts, ev_type, ev_amount, ev_len, wstate, b_count, b_stats,
        )
        out_verdict[k] = verdict
        out_failed[k] = failed
        out_cat[k] = cat
        out_idx[k] = idx
        out_checks[k] = checks


# Plain-Python twins (always uncompiled), then the compiled entry points.
advance_py = _advance
commit_py = _commit
decide_py = _decide


def decide_batch_py(
    op_ts, op_type_id, op_has_amount, op_amount, op_asset_id, op_dest_id,
    k_sigma, pol, masks,
    ev_ts, ev_type, ev_amount, ev_len, wstate, b_count, b_stats,
    out_verdict, out_failed, out_cat, out_idx, out_checks,
):
    """Pure-Python batch loop over decide_py (kernel comparison benchmark)."""
    for k in range(op_ts.shape[0]):
        verdict, failed, cat, idx, checks, _z = decide_py(
            op_ts[k], op_ts[k], op_type_id[k], op_has_amount[k], op_amount[k],
            op_asset_id[k], op_dest_id[k], 1, 1, 1, k_sigma,
            pol, masks,
            ev_ts, ev_type, ev_amount, ev_len, wstate, b_count, b_stats,
        )
        out_verdict[k] = verdict
        out_failed[k] = failed
        out_cat[k] = cat
        out_idx[k] = idx
        out_checks[k] = checks


if USING_NUMBA:
    advance = njit(cache=True, nogil=True)(_advance)
    commit = njit(cache=True, nogil=True)(_commit)
    decide = njit(cache=True, nogil=True)(_decide)
    decide_batch = njit(cache=True, nogil=True)(_decide_batch)
else:
    advance = _advance
    commit = _commit
    decide = _decide
    decide_batch = _decide_batch
