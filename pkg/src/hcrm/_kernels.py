"""Compiled inner loops of the franchise sampler.

All state lives in flat integer arrays so the loops compile with numba.  The
caller precomputes the log-ratio lookup tables (they depend only on the Levy
specs) and supplies one uniform per random decision.
"""

import math

import numpy as np
from numba import njit

OK = 0
NEED_GROW = 1

PHASE_CUSTOMERS = 0
PHASE_DISHES = 1


@njit(cache=True)
def draw_log_categorical(logw, n, u):
    mx = -np.inf
    for i in range(n):
        if logw[i] > mx:
            mx = logw[i]
    total = 0.0
    for i in range(n):
        total += math.exp(logw[i] - mx)
    target = u * total
    acc = 0.0
    for i in range(n):
        acc += math.exp(logw[i] - mx)
        if target < acc:
            return i
    return n - 1


@njit(cache=True)
def _logsumexp(x, n):
    mx = -np.inf
    for i in range(n):
        if x[i] > mx:
            mx = x[i]
    if mx == -np.inf:
        return mx
    s = 0.0
    for i in range(n):
        s += math.exp(x[i] - mx)
    return mx + math.log(s)


@njit(cache=True)
def _remove_dish(k, tab_count, tab_dish, n_tab, dish_tables, nkw, nk, n_dish_arr):
    last = n_dish_arr[0] - 1
    if k != last:
        for i in range(n_tab.shape[0]):
            for j in range(n_tab[i]):
                if tab_dish[i, j] == last:
                    tab_dish[i, j] = k
        dish_tables[k] = dish_tables[last]
        nk[k] = nk[last]
        for w in range(nkw.shape[1]):
            nkw[k, w] = nkw[last, w]
    dish_tables[last] = 0
    nk[last] = 0
    for w in range(nkw.shape[1]):
        nkw[last, w] = 0
    n_dish_arr[0] = last


@njit(cache=True)
def _remove_table(i, j, lo, hi, tok_table, tab_count, tab_dish, n_tab):
    last = n_tab[i] - 1
    if j != last:
        for t in range(lo, hi):
            if tok_table[t] == last:
                tok_table[t] = j
        tab_count[i, j] = tab_count[i, last]
        tab_dish[i, j] = tab_dish[i, last]
    tab_count[i, last] = 0
    tab_dish[i, last] = -1
    n_tab[i] = last


@njit(cache=True)
def _dish_weights_word(w, use_lik, eta, W, dish_tables, nkw, nk, p, dish_old, dish_new, out):
    log_w_new = -math.log(W)
    for k in range(p):
        lw = dish_old[dish_tables[k]]
        if use_lik:
            lw += math.log((nkw[k, w] + eta) / (nk[k] + W * eta))
        out[k] = lw
    out[p] = dish_new + (log_w_new if use_lik else 0.0)


@njit(cache=True)
def _dish_prior_lse(dish_tables, p, dish_old, dish_new):
    mx = dish_new
    for k in range(p):
        if dish_old[dish_tables[k]] > mx:
            mx = dish_old[dish_tables[k]]
    s = math.exp(dish_new - mx)
    for k in range(p):
        s += math.exp(dish_old[dish_tables[k]] - mx)
    return mx + math.log(s)


@njit(cache=True)
def sweep(
    doc_start, tok_word, tok_table, train,
    tab_count, tab_dish, n_tab,
    dish_tables, nkw, nk, n_dish_arr,
    tab_old, tab_new, table_joint_const, joint_mode,
    dish_old, dish_new,
    use_lik, eta,
    uniforms, u_pos, t_start, phase, do_dishes,
):
    """One Gibbs sweep, resumable.

    Returns ``(status, t, phase, u_pos)``.  ``status == NEED_GROW`` means the
    dish capacity is exhausted; the caller enlarges ``nkw``/``nk``/
    ``dish_tables`` and calls again with the returned position.  Tokens with
    ``tok_table == -1`` are unseated and are seated without removal, which
    makes the customer phase double as sequential initialization.
    """
    n_docs = doc_start.shape[0] - 1
    W = nkw.shape[1]
    kcap = nk.shape[0]
    T = tok_word.shape[0]
    dw = np.empty(kcap + 1)
    tw = np.empty(tab_count.shape[1] + 1)
    doc_of = np.empty(T, dtype=np.int64)
    for i in range(n_docs):
        for t in range(doc_start[i], doc_start[i + 1]):
            doc_of[t] = i

    if phase == PHASE_CUSTOMERS:
        for t in range(t_start, T):
            if not train[t]:
                continue
            if n_dish_arr[0] + 1 >= kcap:
                return NEED_GROW, t, PHASE_CUSTOMERS, u_pos
            i = doc_of[t]
            lo = doc_start[i]
            hi = doc_start[i + 1]
            w = tok_word[t]
            j_old = tok_table[t]
            # remove customer
            if j_old >= 0:
                k_old = tab_dish[i, j_old]
                tab_count[i, j_old] -= 1
                nkw[k_old, w] -= 1
                nk[k_old] -= 1
                tok_table[t] = -1
                if tab_count[i, j_old] == 0:
                    _remove_table(i, j_old, lo, hi, tok_table, tab_count, tab_dish, n_tab)
                    dish_tables[k_old] -= 1
                    if dish_tables[k_old] == 0:
                        _remove_dish(k_old, tab_count, tab_dish, n_tab, dish_tables, nkw, nk,
                                     n_dish_arr)
            p = n_dish_arr[0]
            r = n_tab[i]
            # dish weights for a would-be new table holding this word
            _dish_weights_word(w, use_lik, eta, W, dish_tables, nkw, nk, p, dish_old, dish_new, dw)
            lse_lik = _logsumexp(dw, p + 1)
            for j in range(r):
                lw = tab_old[tab_count[i, j]]
                if use_lik:
                    k = tab_dish[i, j]
                    lw += math.log((nkw[k, w] + eta) / (nk[k] + W * eta))
                tw[j] = lw
            if joint_mode:
                tw[r] = table_joint_const + lse_lik
            else:
                if use_lik:
                    tw[r] = tab_new[r] + lse_lik - _dish_prior_lse(dish_tables, p, dish_old,
                                                                    dish_new)
                else:
                    tw[r] = tab_new[r]
            j_new = draw_log_categorical(tw, r + 1, uniforms[u_pos])
            u_pos += 1
            if j_new == r:
                k_new = draw_log_categorical(dw, p + 1, uniforms[u_pos])
                u_pos += 1
                if k_new == p:
                    n_dish_arr[0] = p + 1
                tab_dish[i, r] = k_new
                tab_count[i, r] = 0
                dish_tables[k_new] += 1
                n_tab[i] = r + 1
            tok_table[t] = j_new
            tab_count[i, j_new] += 1
            k = tab_dish[i, j_new]
            nkw[k, w] += 1
            nk[k] += 1
        t_start = 0
        phase = PHASE_DISHES

    if not do_dishes:
        return OK, 0, PHASE_CUSTOMERS, u_pos

    # dish resampling for every table
    seen = np.zeros(W, dtype=np.int64)
    order = np.empty(tab_count.shape[1], dtype=np.int64)
    first = np.empty(tab_count.shape[1] + 1, dtype=np.int64)
    fill = np.empty(tab_count.shape[1], dtype=np.int64)
    start_doc = t_start
    for i in range(start_doc, n_docs):
        lo = doc_start[i]
        hi = doc_start[i + 1]
        # group this doc's seated tokens by table (counting sort)
        r0 = n_tab[i]
        if n_dish_arr[0] + r0 + 1 >= kcap:
            return NEED_GROW, i, PHASE_DISHES, u_pos
        for j in range(r0 + 1):
            first[j] = 0
        for t in range(lo, hi):
            if tok_table[t] >= 0:
                first[tok_table[t] + 1] += 1
        for j in range(r0):
            first[j + 1] += first[j]
        for j in range(r0):
            fill[j] = first[j]
        for t in range(lo, hi):
            jt = tok_table[t]
            if jt >= 0:
                order[fill[jt]] = t
                fill[jt] += 1
        for j in range(r0):
            k_old = tab_dish[i, j]
            a = first[j]
            b = first[j + 1]
            for s in range(a, b):
                w = tok_word[order[s]]
                nkw[k_old, w] -= 1
                nk[k_old] -= 1
            dish_tables[k_old] -= 1
            if dish_tables[k_old] == 0:
                _remove_dish(k_old, tab_count, tab_dish, n_tab, dish_tables, nkw, nk, n_dish_arr)
            p = n_dish_arr[0]
            size = b - a
            for k in range(p + 1):
                if k < p:
                    lw = dish_old[dish_tables[k]]
                else:
                    lw = dish_new
                if use_lik:
                    if k < p:
                        base_n = nk[k]
                    else:
                        base_n = 0
                    for s in range(a, b):
                        w = tok_word[order[s]]
                        c_kw = nkw[k, w] if k < p else 0
                        lw += math.log(c_kw + eta + seen[w])
                        seen[w] += 1
                    for s in range(a, b):
                        seen[tok_word[order[s]]] = 0
                    for c in range(size):
                        lw -= math.log(base_n + W * eta + c)
                dw[k] = lw
            k_new = draw_log_categorical(dw, p + 1, uniforms[u_pos])
            u_pos += 1
            if k_new == p:
                n_dish_arr[0] = p + 1
            tab_dish[i, j] = k_new
            dish_tables[k_new] += 1
            for s in range(a, b):
                w = tok_word[order[s]]
                nkw[k_new, w] += 1
                nk[k_new] += 1
    return OK, 0, PHASE_CUSTOMERS, u_pos
