#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "strans/blocks.hpp"

// Analysis instruments over residual taps and captured attention weights:
//   - norm-ratio traces: ||shortcut|| / ||branch|| per residual sub-layer
//   - attention-distance histograms: weighted mean pixel distance per query
//   - argmax maps: strongest key position per query position
// plus CSV/JSON emission with exact (17 significant digit) float formatting
// so emitted reports parse back bit-identically.

namespace strans {

// ---------------------------------------------------------------------------
// Formatting helpers
// ---------------------------------------------------------------------------

namespace detail {

inline std::string g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

inline double parse_double(const std::string& s) {
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    ST_CHECK(end && *end == '\0' && !s.empty(), "bad numeric field '" << s << "'");
    return v;
}

inline long long parse_int(const std::string& s) {
    char* end = nullptr;
    long long v = std::strtoll(s.c_str(), &end, 10);
    ST_CHECK(end && *end == '\0' && !s.empty(), "bad integer field '" << s << "'");
    return v;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    ST_CHECK(in.good(), "cannot open " << path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    ST_CHECK(out.good(), "cannot write " << path);
    out << text;
    ST_CHECK(out.good(), "write failed for " << path);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Norm-ratio trace
// ---------------------------------------------------------------------------

struct TraceRecord {
    std::string label;  // A1, M1, A2, ... in forward order
    index_t resolution = 0;
    double shortcut_norm = 0;
    double branch_norm = 0;
    double ratio = 0;
    bool flagged = false;  // branch norm was zero; ratio is the +inf sentinel
};

struct NormRatioTrace {
    std::vector<TraceRecord> records;
};

template <class T>
NormRatioTrace norm_ratio_trace(const TapSink<T>& sink) {
    NormRatioTrace trace;
    for (const auto& r : sink.records) {
        TraceRecord rec;
        rec.label = r.label;
        rec.resolution = r.resolution;
        rec.shortcut_norm = static_cast<double>(r.shortcut_norm);
        rec.branch_norm = static_cast<double>(r.branch_norm);
        if (rec.branch_norm == 0) {
            rec.ratio = std::numeric_limits<double>::infinity();
            rec.flagged = true;
        } else {
            rec.ratio = rec.shortcut_norm / rec.branch_norm;
        }
        trace.records.push_back(std::move(rec));
    }
    return trace;
}

/// Mean and (population) variance of each label's ratio across several traces.
struct RatioStats {
    std::string label;
    index_t resolution = 0;
    double mean = 0, variance = 0;
    index_t count = 0;
};

inline std::vector<RatioStats> aggregate_ratios(
    const std::vector<NormRatioTrace>& traces) {
    std::vector<RatioStats> out;
    auto find = [&](const std::string& label) -> RatioStats& {
        for (auto& s : out)
            if (s.label == label) return s;
        out.push_back({label, 0, 0, 0, 0});
        return out.back();
    };
    for (const auto& t : traces)
        for (const auto& r : t.records) {
            RatioStats& s = find(r.label);
            s.resolution = r.resolution;
            s.mean += r.ratio;
            ++s.count;
        }
    for (auto& s : out) s.mean /= static_cast<double>(s.count);
    for (const auto& t : traces)
        for (const auto& r : t.records) {
            RatioStats& s = find(r.label);
            const double d = r.ratio - s.mean;
            s.variance += d * d;
        }
    for (auto& s : out) s.variance /= static_cast<double>(s.count);
    return out;
}

inline std::string trace_to_csv(const NormRatioTrace& trace) {
    std::ostringstream out;
    out << "label,resolution,shortcut_norm,branch_norm,ratio\n";
    for (const auto& r : trace.records)
        out << r.label << ',' << r.resolution << ',' << detail::g17(r.shortcut_norm)
            << ',' << detail::g17(r.branch_norm) << ',' << detail::g17(r.ratio)
            << '\n';
    return out.str();
}

inline NormRatioTrace trace_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    ST_CHECK(std::getline(in, line), "empty trace CSV");
    NormRatioTrace trace;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = detail::split_csv_line(line);
        ST_CHECK(f.size() == 5, "trace CSV row needs 5 fields, got " << f.size());
        TraceRecord r;
        r.label = f[0];
        r.resolution = detail::parse_int(f[1]);
        r.shortcut_norm = detail::parse_double(f[2]);
        r.branch_norm = detail::parse_double(f[3]);
        r.ratio = detail::parse_double(f[4]);
        r.flagged = std::isinf(r.ratio);
        trace.records.push_back(std::move(r));
    }
    return trace;
}

inline void emit_report(const NormRatioTrace& trace, const std::string& path) {
    detail::write_text_file(path, trace_to_csv(trace));
}

// ---------------------------------------------------------------------------
// Attention distance
// ---------------------------------------------------------------------------

inline constexpr index_t kDistanceBins = 32;

struct DistanceHistogram {
    std::vector<double> edges;            // kDistanceBins + 1 uniform edges
    std::vector<std::int64_t> counts;     // kDistanceBins
    double sum = 0;
    double max_sample = 0;
    std::int64_t total = 0;

    void init(double max_distance) {
        edges.resize(kDistanceBins + 1);
        for (index_t i = 0; i <= kDistanceBins; ++i)
            edges[i] = max_distance * static_cast<double>(i) /
                       static_cast<double>(kDistanceBins);
        counts.assign(kDistanceBins, 0);
    }

    void put(double d) {
        const double hi = edges.back();
        index_t bin = hi > 0 ? static_cast<index_t>(d / hi * kDistanceBins)
                             : index_t(0);
        if (bin >= kDistanceBins) bin = kDistanceBins - 1;
        if (bin < 0) bin = 0;
        ++counts[bin];
        sum += d;
        if (d > max_sample) max_sample = d;
        ++total;
    }

    double mean() const { return total ? sum / static_cast<double>(total) : 0.0; }
};

struct DistanceReport {
    std::string label;
    index_t resolution = 0;
    index_t heads = 0;
    bool windowed = false;
    index_t window = 0;
    double max_distance = 0;  // histogram upper edge: (M-1)*sqrt(2) or grid diagonal
    DistanceHistogram pooled;
    std::vector<DistanceHistogram> per_head;
};

/// Attention-weighted mean pixel distance per query (or, with to_argmax_only,
/// distance to the strongest key). Shifted-window records measure in original
/// unshifted coordinates; masked pairs carry exactly zero weight so wrapped
/// neighbours never contribute.
template <class T>
DistanceReport attention_distance(const TapRecord<T>& rec,
                                  bool to_argmax_only = false) {
    ST_CHECK(rec.is_attention && rec.weights.defined(),
             "attention_distance needs a captured attention record");
    const index_t H = rec.grid_h, W = rec.grid_w, heads = rec.heads;
    const index_t G = rec.weights.dim(0), N = rec.weights.dim(1);
    ST_CHECK(rec.weights.dim(2) == N, "weights must be square per group");

    DistanceReport report;
    report.label = rec.label;
    report.resolution = rec.grid_h;
    report.heads = heads;
    report.windowed = !rec.global_attn;
    report.window = rec.window;

    const index_t M = rec.window;
    index_t nww = 1;
    if (rec.global_attn) {
        ST_CHECK(N == H * W, "global weights token count mismatch");
        report.max_distance = std::sqrt(static_cast<double>((H - 1) * (H - 1) +
                                                            (W - 1) * (W - 1)));
    } else {
        ST_CHECK(N == M * M, "windowed weights token count mismatch");
        nww = W / M;
        report.max_distance = static_cast<double>(M - 1) * std::sqrt(2.0);
    }
    report.pooled.init(report.max_distance);
    report.per_head.resize(heads);
    for (auto& h : report.per_head) h.init(report.max_distance);

    const index_t s = rec.shifted ? M / 2 : 0;
    // token -> pixel position in the stage's own (original) grid coordinates
    auto position = [&](index_t g, index_t t, index_t& pi, index_t& pj) {
        if (rec.global_attn) {
            pi = t / W;
            pj = t % W;
        } else {
            const index_t win = g / heads % (nww * (H / M));
            const index_t wi = win / nww, wj = win % nww;
            pi = (wi * M + t / M + s) % H;
            pj = (wj * M + t % M + s) % W;
        }
    };

    const T* w = rec.weights.values().data();
    for (index_t g = 0; g < G; ++g) {
        const index_t head = g % heads;
        for (index_t q = 0; q < N; ++q) {
            index_t qi, qj;
            position(g, q, qi, qj);
            const T* row = w + (g * N + q) * N;
            double d = 0;
            if (to_argmax_only) {
                index_t best = 0;
                for (index_t k = 1; k < N; ++k)
                    if (row[k] > row[best]) best = k;
                index_t ki, kj;
                position(g, best, ki, kj);
                d = std::sqrt(static_cast<double>((qi - ki) * (qi - ki) +
                                                  (qj - kj) * (qj - kj)));
            } else {
                for (index_t k = 0; k < N; ++k) {
                    if (row[k] == T(0)) continue;
                    index_t ki, kj;
                    position(g, k, ki, kj);
                    d += static_cast<double>(row[k]) *
                         std::sqrt(static_cast<double>((qi - ki) * (qi - ki) +
                                                       (qj - kj) * (qj - kj)));
                }
            }
            report.pooled.put(d);
            report.per_head[head].put(d);
        }
    }
    return report;
}

// CSV schema (one row per bin): label,head,bin_index,bin_lo,bin_hi,count
// with head = -1 for the pooled histogram. Edges print at 17 significant
// digits so they parse back to the exact double.
inline std::string distance_to_csv(const std::vector<DistanceReport>& reports) {
    std::ostringstream out;
    out << "label,head,bin_index,bin_lo,bin_hi,count\n";
    auto rows = [&](const std::string& label, index_t head,
                    const DistanceHistogram& h) {
        for (index_t b = 0; b < kDistanceBins; ++b)
            out << label << ',' << head << ',' << b << ','
                << detail::g17(h.edges[b]) << ',' << detail::g17(h.edges[b + 1])
                << ',' << h.counts[b] << '\n';
    };
    for (const auto& r : reports) {
        rows(r.label, -1, r.pooled);
        for (index_t h = 0; h < r.heads; ++h) rows(r.label, h, r.per_head[h]);
    }
    return out.str();
}

struct DistanceCsvRow {
    std::string label;
    index_t head = 0, bin_index = 0;
    double bin_lo = 0, bin_hi = 0;
    std::int64_t count = 0;
};

inline std::vector<DistanceCsvRow> distance_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    ST_CHECK(std::getline(in, line), "empty distance CSV");
    std::vector<DistanceCsvRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = detail::split_csv_line(line);
        ST_CHECK(f.size() == 6, "distance CSV row needs 6 fields");
        rows.push_back({f[0], detail::parse_int(f[1]), detail::parse_int(f[2]),
                        detail::parse_double(f[3]), detail::parse_double(f[4]),
                        detail::parse_int(f[5])});
    }
    return rows;
}

// Summary CSV: label,head,total,mean,max_sample (head = -1 pooled).
inline std::string distance_summary_to_csv(
    const std::vector<DistanceReport>& reports) {
    std::ostringstream out;
    out << "label,head,total,mean,max_sample\n";
    auto row = [&](const std::string& label, index_t head,
                   const DistanceHistogram& h) {
        out << label << ',' << head << ',' << h.total << ','
            << detail::g17(h.mean()) << ',' << detail::g17(h.max_sample) << '\n';
    };
    for (const auto& r : reports) {
        row(r.label, -1, r.pooled);
        for (index_t h = 0; h < r.heads; ++h) row(r.label, h, r.per_head[h]);
    }
    return out.str();
}

inline void emit_report(const std::vector<DistanceReport>& reports,
                        const std::string& path) {
    detail::write_text_file(path, distance_to_csv(reports));
}

// ---------------------------------------------------------------------------
// Argmax attention map
// ---------------------------------------------------------------------------

struct ArgmaxEntry {
    index_t qi = 0, qj = 0;
    index_t ki = 0, kj = 0;
    double w = 0;
};

struct ArgmaxMap {
    index_t grid_h = 0, grid_w = 0;
    std::vector<ArgmaxEntry> entries;  // one per query, row-major query order
};

/// Strongest key per query position, with weights averaged over heads and
/// batch samples first. Ties break toward the smallest flat key index on the
/// stage grid. Windowed records only consider each query's own (shifted)
/// window co-members.
template <class T>
ArgmaxMap argmax_attention_map(const TapRecord<T>& rec) {
    ST_CHECK(rec.is_attention && rec.weights.defined(),
             "argmax_attention_map needs a captured attention record");
    const index_t H = rec.grid_h, W = rec.grid_w, heads = rec.heads;
    const index_t G = rec.weights.dim(0), N = rec.weights.dim(1);
    const index_t M = rec.window;
    const index_t s = rec.shifted ? M / 2 : 0;
    const index_t nww = rec.global_attn ? 1 : W / M;

    auto position = [&](index_t g, index_t t) -> index_t {  // grid flat index
        if (rec.global_attn) return t;
        const index_t win = g / heads % (nww * (H / M));
        const index_t wi = win / nww, wj = win % nww;
        const index_t pi = (wi * M + t / M + s) % H;
        const index_t pj = (wj * M + t % M + s) % W;
        return pi * W + pj;
    };

    // averaged weight per (grid query, grid key) over every group that
    // contains the query; each query appears in G / (H*W/N) groups
    std::vector<std::map<index_t, double>> acc(H * W);
    std::vector<index_t> hits(H * W, 0);
    const T* w = rec.weights.values().data();
    for (index_t g = 0; g < G; ++g)
        for (index_t q = 0; q < N; ++q) {
            const index_t qf = position(g, q);
            ++hits[qf];
            const T* row = w + (g * N + q) * N;
            auto& bucket = acc[qf];
            for (index_t k = 0; k < N; ++k)
                bucket[position(g, k)] += static_cast<double>(row[k]);
        }

    ArgmaxMap map;
    map.grid_h = H;
    map.grid_w = W;
    map.entries.resize(H * W);
    for (index_t qf = 0; qf < H * W; ++qf) {
        ST_CHECK(hits[qf] > 0, "query " << qf << " missing from attention groups");
        index_t best = -1;
        double best_w = 0;
        for (const auto& [kf, sum] : acc[qf]) {
            const double avg = sum / static_cast<double>(hits[qf]);
            if (best < 0 || avg > best_w) {  // map is key-ordered: ties keep
                best = kf;                   // the smallest flat index
                best_w = avg;
            }
        }
        map.entries[qf] = {qf / W, qf % W, best / W, best % W, best_w};
    }
    return map;
}

inline std::string argmax_to_json(const ArgmaxMap& map) {
    nlohmann::json j;
    j["grid"] = {map.grid_h, map.grid_w};
    j["entries"] = nlohmann::json::array();
    for (const auto& e : map.entries)
        j["entries"].push_back(
            {{"q", {e.qi, e.qj}}, {"k", {e.ki, e.kj}}, {"w", e.w}});
    return j.dump(2);
}

inline ArgmaxMap argmax_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    ArgmaxMap map;
    map.grid_h = j.at("grid").at(0).get<index_t>();
    map.grid_w = j.at("grid").at(1).get<index_t>();
    for (const auto& e : j.at("entries")) {
        ArgmaxEntry a;
        a.qi = e.at("q").at(0).get<index_t>();
        a.qj = e.at("q").at(1).get<index_t>();
        a.ki = e.at("k").at(0).get<index_t>();
        a.kj = e.at("k").at(1).get<index_t>();
        a.w = e.at("w").get<double>();
        map.entries.push_back(a);
    }
    return map;
}

inline void emit_report(const ArgmaxMap& map, const std::string& path) {
    detail::write_text_file(path, argmax_to_json(map));
}

}  // namespace strans
