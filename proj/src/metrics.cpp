#include "ehstack/metrics.hpp"

#include "ehstack/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace ehstack {

double throughput_error(double predicted, double baseline) {
    if (!(baseline > 0.0)) throw ValidationError("throughput error undefined for a zero baseline");
    return std::abs(predicted - baseline) / baseline;
}

namespace {

// Path key: cost in the high bits, length in the low 32 bits, so comparing
// keys compares cost first and then length.
using Key = std::int64_t;
using Idx = std::int64_t;
constexpr Key kInfKey = Key{1} << 62;
constexpr Key kMismatchCell = (Key{1} << 32) + 1;
constexpr Key kMatchCell = 1;

bool finite(Key k) { return k < kInfKey / 2; }

struct Run {
    Idx begin;
    Idx end;  // inclusive
};

std::vector<Run> runs_of(const std::vector<std::uint8_t>& x) {
    std::vector<Run> out;
    const auto n = static_cast<Idx>(x.size());
    Idx s = 0;
    for (Idx i = 1; i <= n; ++i) {
        if (i == n || (x[static_cast<std::size_t>(i)] != 0) != (x[static_cast<std::size_t>(s)] != 0)) {
            out.push_back({s, i - 1});
            s = i;
        }
    }
    return out;
}

/// Values on a contiguous index range [lo, lo + v.size()).
struct Segment {
    Idx lo = 0;
    std::vector<Key> v;

    [[nodiscard]] Idx hi() const { return lo + static_cast<Idx>(v.size()) - 1; }
    [[nodiscard]] Key at(Idx k) const {
        if (k < lo || k > hi()) return kInfKey;
        return v[static_cast<std::size_t>(k - lo)];
    }
};

struct Scratch {
    std::vector<Idx> window;
    std::vector<Key> prefix;
    std::vector<Key> suffix;
    Segment top;
    Segment left;
    Segment out_a;
    Segment out_b;
};

/// out[q] = min over x <= q of T[x] + lambda * max(d, q - x), for q in [o0, o1].
void same_axis(const Segment& t, Idx o0, Idx o1, Idx d, Key lambda, Segment& out, Scratch& s) {
    out.lo = o0;
    out.v.assign(static_cast<std::size_t>(std::max<Idx>(0, o1 - o0 + 1)), kInfKey);
    if (t.v.empty() || o1 < o0) return;
    // monotone deque over [q - d, q] holding indices with increasing values
    auto& window = s.window;
    window.clear();
    std::size_t head = 0;
    Idx next = t.lo;
    Key prefix = kInfKey;  // min of T[x] - lambda * x over x < q - d
    Idx prefix_upto = t.lo - 1;
    for (Idx q = o0; q <= o1; ++q) {
        while (next <= std::min(q, t.hi())) {
            const Key val = t.at(next);
            while (window.size() > head && t.at(window.back()) >= val) window.pop_back();
            window.push_back(next);
            ++next;
        }
        while (window.size() > head && window[head] < q - d) ++head;
        Key best = kInfKey;
        if (window.size() > head) {
            const Key w = t.at(window[head]);
            if (finite(w)) best = w + lambda * d;
        }
        while (prefix_upto + 1 < q - d && prefix_upto + 1 <= t.hi()) {
            ++prefix_upto;
            const Key val = t.at(prefix_upto);
            if (finite(val)) prefix = std::min(prefix, val - lambda * prefix_upto);
        }
        if (prefix < kInfKey) best = std::min(best, prefix + lambda * q);
        out.v[static_cast<std::size_t>(q - o0)] = best;
    }
}

/// out[q] = min over x of T[x] + lambda * max(a - x, q - b), for q in [o0, o1].
void cross_axis(const Segment& t, Idx a, Idx b, Idx o0, Idx o1, Key lambda, Segment& out, Scratch& s) {
    out.lo = o0;
    out.v.assign(static_cast<std::size_t>(std::max<Idx>(0, o1 - o0 + 1)), kInfKey);
    if (t.v.empty() || o1 < o0) return;
    const std::size_t n = t.v.size();
    auto& prefix = s.prefix;  // min_{lo..x} T[x] - lambda * x
    auto& suffix = s.suffix;  // min_{x..hi} T[x]
    prefix.resize(n);
    suffix.resize(n);
    Key run = kInfKey;
    for (std::size_t k = 0; k < n; ++k) {
        const Key val = t.v[k];
        if (finite(val)) run = std::min(run, val - lambda * (t.lo + static_cast<Idx>(k)));
        prefix[k] = run;
    }
    run = kInfKey;
    for (std::size_t k = n; k-- > 0;) {
        run = std::min(run, t.v[k]);
        suffix[k] = run;
    }
    for (Idx q = o0; q <= o1; ++q) {
        const Idx thr = a - (q - b);  // x <= thr: the a - x term dominates
        Key best = kInfKey;
        if (thr >= t.lo) {
            const Idx k = std::min(thr, t.hi()) - t.lo;
            const Key p = prefix[static_cast<std::size_t>(k)];
            if (p < kInfKey) best = p + lambda * a;
        }
        const Idx first = std::max(thr + 1, t.lo);
        if (first <= t.hi()) {
            const Key sv = suffix[static_cast<std::size_t>(first - t.lo)];
            if (finite(sv)) best = std::min(best, sv + lambda * (q - b));
        }
        out.v[static_cast<std::size_t>(q - o0)] = best;
    }
}

/// Outputs of one run of a: its last row across the band, and the last
/// column of every block (run of a x run of b) it touches.
struct Row {
    std::size_t q_lo = 0;
    std::size_t q_hi = 0;
    Segment bottom;
    Idx fin0 = 0;  // finite bottom columns, empty when fin1 < fin0
    Idx fin1 = -1;
    std::vector<Idx> right_lo;
    std::vector<std::size_t> right_off;  // blocks + 1 offsets into right
    std::vector<Key> right;

    [[nodiscard]] Key right_at(std::size_t q, Idx i) const {
        if (q < q_lo || q > q_hi) return kInfKey;
        const std::size_t k = q - q_lo;
        const Idx lo = right_lo[k];
        const auto n = static_cast<Idx>(right_off[k + 1] - right_off[k]);
        if (i < lo || i >= lo + n) return kInfKey;
        return right[right_off[k] + static_cast<std::size_t>(i - lo)];
    }
};

// Exact banded DTW on run-length blocks. Inside a block every cell has the
// same cost, so the cheapest way from an entry cell to an exit cell is a
// Chebyshev path and whole block edges can be computed with sliding minima.
// Only every k-th row is kept; backtracking recomputes one segment at a time.
class BlockDtw {
public:
    /// Cells whose key exceeds `ub` are dropped. Any key of a feasible path
    /// is a valid bound, and the result stays exact.
    BlockDtw(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b, std::size_t band,
             Key ub = kInfKey, bool keep_rows = true)
        : a_(a), b_(b), n_(static_cast<Idx>(a.size())), ub_(ub) {
        w_ = band >= a.size() ? n_ : static_cast<Idx>(band);
        ra_ = runs_of(a);
        rb_ = runs_of(b);
        const std::size_t rows = ra_.size();
        k_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(rows)))));
        Row prev;
        Row cur;
        for (std::size_t p = 0; p < rows; ++p) {
            compute_row(p, p > 0 ? &prev : nullptr, cur);
            if (keep_rows && p % k_ == 0) checkpoints_.push_back(cur);
            std::swap(prev, cur);
        }
        last_ = std::move(prev);
    }

    [[nodiscard]] Key final_key() const {
        if (n_ == 0) return 0;
        return last_.bottom.at(n_ - 1);
    }

    void backtrack(std::vector<Idx>& pi, std::vector<Idx>& pj);

private:
    const std::vector<std::uint8_t>& a_;
    const std::vector<std::uint8_t>& b_;
    Idx n_;
    Key ub_;
    Idx w_ = 0;
    std::vector<Run> ra_, rb_;
    std::size_t k_ = 1;
    std::vector<Row> checkpoints_;
    Row last_;
    std::map<std::size_t, std::vector<Row>> cache_;
    Scratch scratch_;

    [[nodiscard]] static std::size_t run_index(const std::vector<Run>& runs, Idx k) {
        const auto it = std::upper_bound(runs.begin(), runs.end(), k, [](Idx v, const Run& r) { return v < r.begin; });
        return static_cast<std::size_t>(it - runs.begin()) - 1;
    }

    [[nodiscard]] Key lambda_of(std::size_t p, std::size_t q) const {
        const bool mismatch = (a_[static_cast<std::size_t>(ra_[p].begin)] != 0) !=
                              (b_[static_cast<std::size_t>(rb_[q].begin)] != 0);
        return mismatch ? kMismatchCell : kMatchCell;
    }

    /// Entry keys on the top row and left column of block (p, q).
    void entries(std::size_t p, std::size_t q, const Row* prev, const Row& cur, Segment& top, Segment& left) const {
        const Idx r0 = ra_[p].begin;
        const Idx r1 = ra_[p].end;
        const Idx c0 = rb_[q].begin;
        const Idx c1 = rb_[q].end;
        const Key lam = lambda_of(p, q);
        const Idx tj0 = std::max(c0, r0 - w_);
        const Idx tj1 = std::min(c1, r0 + w_);
        top.lo = tj0;
        top.v.assign(static_cast<std::size_t>(std::max<Idx>(0, tj1 - tj0 + 1)), kInfKey);
        for (Idx j = tj0; j <= tj1; ++j) {
            Key best = kInfKey;
            if (prev) best = std::min({prev->bottom.at(j), prev->bottom.at(j - 1)});
            if (j == c0 && q > 0) best = std::min(best, cur.right_at(q - 1, r0));
            if (r0 == 0 && j == 0) best = 0;
            if (finite(best) && best + lam <= ub_) top.v[static_cast<std::size_t>(j - tj0)] = best + lam;
        }
        const Idx li0 = std::max(r0, c0 - w_);
        const Idx li1 = std::min(r1, c0 + w_);
        left.lo = li0;
        left.v.assign(static_cast<std::size_t>(std::max<Idx>(0, li1 - li0 + 1)), kInfKey);
        for (Idx i = li0; i <= li1; ++i) {
            Key best = kInfKey;
            if (q > 0) {
                best = cur.right_at(q - 1, i);
                if (i > r0) best = std::min(best, cur.right_at(q - 1, i - 1));
            }
            if (i == r0 && prev) best = std::min({best, prev->bottom.at(c0), prev->bottom.at(c0 - 1)});
            if (i == 0 && c0 == 0) best = 0;
            if (finite(best) && best + lam <= ub_) left.v[static_cast<std::size_t>(i - li0)] = best + lam;
        }
    }

    // Only blocks reachable within the bound are visited: from the first
    // finite column of the previous row, rightwards until neither the
    // previous row nor the block to the left can feed a finite entry.
    void compute_row(std::size_t p, const Row* prev, Row& row) {
        const Idx r0 = ra_[p].begin;
        const Idx r1 = ra_[p].end;
        const std::size_t qb_lo = run_index(rb_, std::max<Idx>(0, r0 - w_));
        const std::size_t qb_hi = run_index(rb_, std::min(n_ - 1, r1 + w_));
        const Idx b_lo = std::max<Idx>(0, r1 - w_);
        const Idx b_hi = std::min(n_ - 1, r1 + w_);
        row.right_lo.clear();
        row.right_off.assign(1, 0);
        row.right.clear();
        row.bottom.v.clear();
        row.fin0 = 0;
        row.fin1 = -1;
        Idx pf0 = 0;
        Idx pf1 = 0;
        if (prev) {
            pf0 = prev->fin0;
            pf1 = prev->fin1;
        }
        if (pf1 < pf0) {
            row.q_lo = 1;
            row.q_hi = 0;
            return;
        }
        row.q_lo = std::max(qb_lo, run_index(rb_, std::min(pf0, n_ - 1)));
        row.q_hi = row.q_lo;
        row.bottom.lo = std::max(b_lo, rb_[row.q_lo].begin);
        Scratch& s = scratch_;
        for (std::size_t q = row.q_lo; q <= qb_hi; ++q) {
            const Idx c0 = rb_[q].begin;
            const Idx c1 = rb_[q].end;
            const Key lam = lambda_of(p, q);
            entries(p, q, prev, row, s.top, s.left);
            row.q_hi = q;

            const Idx bj0 = std::max(c0, b_lo);
            const Idx bj1 = std::min(c1, b_hi);
            if (bj0 <= bj1) {
                if (bj0 != row.bottom.hi() + 1) throw ConsistencyError("DTW bottom row is not contiguous");
                same_axis(s.top, bj0, bj1, r1 - r0, lam, s.out_a, s);
                cross_axis(s.left, r1, c0, bj0, bj1, lam, s.out_b, s);
                for (Idx j = bj0; j <= bj1; ++j) {
                    const auto k = static_cast<std::size_t>(j - bj0);
                    const Key v = std::min(s.out_a.v[k], s.out_b.v[k]);
                    row.bottom.v.push_back(v <= ub_ ? v : kInfKey);
                    if (v <= ub_) {
                        if (row.fin1 < row.fin0) row.fin0 = j;
                        row.fin1 = j;
                    }
                }
            }

            const Idx ri0 = std::max(r0, c1 - w_);
            const Idx ri1 = std::min(r1, c1 + w_);
            same_axis(s.left, ri0, ri1, c1 - c0, lam, s.out_a, s);
            cross_axis(s.top, c1, r0, ri0, ri1, lam, s.out_b, s);
            row.right_lo.push_back(ri0);
            bool live = false;
            for (Idx i = ri0; i <= ri1; ++i) {
                const auto k = static_cast<std::size_t>(i - ri0);
                const Key v = std::min(s.out_a.v[k], s.out_b.v[k]);
                live = live || v <= ub_;
                row.right.push_back(v <= ub_ ? v : kInfKey);
            }
            row.right_off.push_back(row.right.size());
            if (!live && c1 >= pf1 + 1) break;
        }
    }

    /// Row p, recomputed from the nearest checkpoint if needed.
    const Row& row_at(std::size_t p) {
        if (p + 1 == ra_.size()) return last_;
        const std::size_t seg = p / k_;
        auto it = cache_.find(seg);
        if (it == cache_.end()) {
            std::vector<Row> rows;
            rows.push_back(checkpoints_[seg]);
            const std::size_t end = std::min(ra_.size(), (seg + 1) * k_);
            for (std::size_t r = seg * k_ + 1; r < end; ++r) {
                Row next;
                compute_row(r, &rows.back(), next);
                rows.push_back(std::move(next));
            }
            it = cache_.emplace(seg, std::move(rows)).first;
        }
        return it->second[p - seg * k_];
    }

    void drop_segments_above(std::size_t p) {
        const std::size_t seg = p / k_;
        cache_.erase(cache_.upper_bound(seg), cache_.end());
    }
};

void BlockDtw::backtrack(std::vector<Idx>& pi, std::vector<Idx>& pj) {
    pi.clear();
    pj.clear();
    if (n_ == 0) return;
    Idx yi = n_ - 1;
    Idx yj = n_ - 1;
    Key key = final_key();
    Segment top;
    Segment left;
    std::vector<std::pair<Idx, Idx>> seg;
    while (true) {
        const std::size_t p = run_index(ra_, yi);
        const std::size_t q = run_index(rb_, yj);
        drop_segments_above(p);
        const Row* prev = p > 0 ? &row_at(p - 1) : nullptr;
        const Row& cur = row_at(p);
        if (q < cur.q_lo || q > cur.q_hi) throw ConsistencyError("DTW backtrack left the band");
        entries(p, q, prev, cur, top, left);
        const Idx r0 = ra_[p].begin;
        const Idx c0 = rb_[q].begin;
        const Key lam = lambda_of(p, q);
        Idx xi = -1;
        Idx xj = -1;
        Key entry = kInfKey;
        for (Idx j = top.lo; j <= std::min(top.hi(), yj) && xi < 0; ++j) {
            const Key t = top.at(j);
            if (finite(t) && t + lam * std::max(yi - r0, yj - j) == key) {
                xi = r0;
                xj = j;
                entry = t;
            }
        }
        for (Idx i = left.lo; i <= std::min(left.hi(), yi) && xi < 0; ++i) {
            const Key l = left.at(i);
            if (finite(l) && l + lam * std::max(yi - i, yj - c0) == key) {
                xi = i;
                xj = c0;
                entry = l;
            }
        }
        if (xi < 0) throw ConsistencyError("DTW backtrack found no entry cell");

        // shortest monotone path x -> y, diagonal moves first
        seg.clear();
        Idx ci = xi;
        Idx cj = xj;
        seg.emplace_back(ci, cj);
        while (ci != yi || cj != yj) {
            if (ci < yi && cj < yj) {
                ++ci;
                ++cj;
            } else if (ci < yi) {
                ++ci;
            } else {
                ++cj;
            }
            seg.emplace_back(ci, cj);
        }
        for (auto it = seg.rbegin(); it != seg.rend(); ++it) {
            pi.push_back(it->first);
            pj.push_back(it->second);
        }

        if (xi == 0 && xj == 0) break;
        const Key want = entry - lam;
        // predecessor outside the block: diagonal, up or left
        const auto key_at = [&](Idx i, Idx j) -> Key {
            if (i < 0 || j < 0) return kInfKey;
            const std::size_t pp = run_index(ra_, i);
            const std::size_t qq = run_index(rb_, j);
            const Row& r = pp == p ? cur : *prev;
            if (i == ra_[pp].end) return r.bottom.at(j);
            if (j == rb_[qq].end) return r.right_at(qq, i);
            return kInfKey;
        };
        const std::pair<Idx, Idx> cand[3] = {{xi - 1, xj - 1}, {xi - 1, xj}, {xi, xj - 1}};
        bool found = false;
        for (const auto& [ci2, cj2] : cand) {
            if (ci2 >= r0 && cj2 >= c0) continue;
            if (key_at(ci2, cj2) == want) {
                yi = ci2;
                yj = cj2;
                key = want;
                found = true;
                break;
            }
        }
        if (!found) throw ConsistencyError("DTW backtrack found no predecessor");
    }
    std::reverse(pi.begin(), pi.end());
    std::reverse(pj.begin(), pj.end());
}

void require_equal(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
    if (a.size() != b.size()) throw ValidationError("DTW sequences must have equal length (pad first)");
    if (a.size() >= (std::size_t{1} << 31)) throw ValidationError("DTW sequence too long");
}

std::vector<std::uint8_t> padded(const std::vector<std::uint8_t>& x, std::size_t n) {
    std::vector<std::uint8_t> out(n, 0);
    for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] ? 1 : 0;
    return out;
}

/// Key of the best path found with a cascade of narrower bands, starting
/// from the diagonal. Every stage is a feasible path of the full band.
Key upper_bound(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b, std::size_t band) {
    Key mism = 0;
    for (std::size_t k = 0; k < a.size(); ++k) mism += (a[k] != 0) != (b[k] != 0);
    Key ub = (mism << 32) + static_cast<Key>(a.size());
    for (std::size_t w = 16; w < band && w < a.size(); w *= 8) {
        const BlockDtw stage(a, b, w, ub, false);
        ub = std::min(ub, stage.final_key());
    }
    return ub;
}

}  // namespace

DtwCost dtw_cost(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b, std::size_t band) {
    require_equal(a, b);
    if (a.empty()) return {};
    const BlockDtw dtw(a, b, band, upper_bound(a, b, band), false);
    const Key k = dtw.final_key();
    return {static_cast<std::uint64_t>(k >> 32), static_cast<std::uint64_t>(k & 0xffffffffLL)};
}

Alignment dtw_align(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b, std::size_t band) {
    require_equal(a, b);
    Alignment out;
    if (a.empty()) return out;
    BlockDtw dtw(a, b, band, upper_bound(a, b, band));
    const Key k = dtw.final_key();
    out.cost = static_cast<std::uint64_t>(k >> 32);
    out.length = static_cast<std::uint64_t>(k & 0xffffffffLL);
    std::vector<Idx> pi;
    std::vector<Idx> pj;
    dtw.backtrack(pi, pj);
    out.a.reserve(pi.size());
    out.b.reserve(pi.size());
    for (std::size_t s = 0; s < pi.size(); ++s) {
        const std::uint8_t va = a[static_cast<std::size_t>(pi[s])] ? 1 : 0;
        const std::uint8_t vb = b[static_cast<std::size_t>(pj[s])] ? 1 : 0;
        out.a.push_back(va);
        out.b.push_back(vb);
        if (va != vb) {
            if (out.spans.empty() || out.spans.back().path_end != s) {
                MismatchSpan span;
                span.path_begin = s;
                span.a_begin = static_cast<std::size_t>(pi[s]);
                span.b_begin = static_cast<std::size_t>(pj[s]);
                out.spans.push_back(span);
            }
            auto& span = out.spans.back();
            span.path_end = s + 1;
            span.a_end = static_cast<std::size_t>(pi[s]);
            span.b_end = static_cast<std::size_t>(pj[s]);
        }
    }
    if (out.a.size() != out.length) throw ConsistencyError("DTW path length disagrees with its key");
    return out;
}

std::size_t band_steps(double window, double step_len) {
    if (!(step_len > 0.0)) throw ValidationError("step length must be > 0");
    if (std::isinf(window) && window > 0.0) return kUnbounded;
    if (!(window > 0.0)) return 0;
    return static_cast<std::size_t>(std::floor(window / step_len + 1e-9));
}

Alignment dtw_align(const ActivityProfile& a, const ActivityProfile& b, double window) {
    if (std::abs(a.step_len - b.step_len) > 1e-12 * a.step_len)
        throw ValidationError("activity profiles use different step lengths");
    const std::size_t n = std::max(a.size(), b.size());
    return dtw_align(padded(a.on_off, n), padded(b.on_off, n), band_steps(window, a.step_len));
}

ApeReport compute_ape(const ActivityProfile& a, const ActivityProfile& b, double window) {
    if (std::abs(a.step_len - b.step_len) > 1e-12 * a.step_len)
        throw ValidationError("activity profiles use different step lengths");
    const std::size_t n = std::max(a.size(), b.size());
    const auto pa = padded(a.on_off, n);
    const auto pb = padded(b.on_off, n);
    ApeReport r;
    r.dtw_window = window;
    r.n_grid = n;
    r.band = band_steps(window, a.step_len);
    if (n == 0) return r;
    std::uint64_t raw = 0;
    for (std::size_t k = 0; k < n; ++k) raw += pa[k] != pb[k] ? 1 : 0;
    r.epsilon_raw = static_cast<double>(raw) / static_cast<double>(n);
    Alignment al = dtw_align(pa, pb, r.band);
    r.n_diff = al.cost;
    r.n_total = al.length;
    r.epsilon = static_cast<double>(al.cost) / static_cast<double>(al.length);
    r.epsilon_grid = std::min(1.0, static_cast<double>(al.cost) / static_cast<double>(n));
    r.spans = std::move(al.spans);
    return r;
}

}  // namespace ehstack
