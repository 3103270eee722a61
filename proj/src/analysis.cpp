#include "verlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "verlab/error.hpp"

namespace verlab {

namespace {

std::string head_name(HeadId h) { return "(" + std::to_string(h.layer) + ", " + std::to_string(h.head) + ")"; }

}  // namespace

void ModelTopology::validate() const {
    if (num_layers < 1 || num_heads < 1) {
        throw FormatError("topology: num_layers and num_heads must be >= 1");
    }
    if (token_to_patch.empty()) return;
    const std::size_t n = grid.patch_count();
    if (token_to_patch.size() != n) {
        throw FormatError("topology.token_to_patch: has " + std::to_string(token_to_patch.size()) +
                          " entries, expected " + std::to_string(n));
    }
    std::vector<bool> seen(n, false);
    for (std::size_t t = 0; t < n; ++t) {
        const auto p = token_to_patch[t];
        if (p >= n || seen[p]) {
            throw FormatError("topology.token_to_patch[" + std::to_string(t) + "]: not a bijection onto the grid");
        }
        seen[p] = true;
    }
}

AttentionRecord::AttentionRecord(std::size_t step_, int layers, int heads, std::size_t tokens_)
    : step(step_),
      num_layers(layers),
      num_heads(heads),
      tokens(tokens_),
      attn(static_cast<std::size_t>(layers) * static_cast<std::size_t>(heads) * tokens_, 0.0) {}

std::span<const double> AttentionRecord::head(HeadId h) const {
    if (h.layer < 0 || h.layer >= num_layers || h.head < 0 || h.head >= num_heads) {
        throw RangeError("attention record: head " + head_name(h) + " out of range");
    }
    const auto offset = (static_cast<std::size_t>(h.layer) * num_heads + h.head) * tokens;
    return {attn.data() + offset, tokens};
}

std::span<double> AttentionRecord::head(HeadId h) {
    auto c = std::as_const(*this).head(h);
    return {const_cast<double*>(c.data()), c.size()};
}

void AttentionRecord::validate(double sum_tolerance) const {
    if (attn.size() != static_cast<std::size_t>(num_layers) * num_heads * tokens) {
        throw ShapeError("attention record: payload does not match dims");
    }
    for (int l = 0; l < num_layers; ++l) {
        for (int h = 0; h < num_heads; ++h) {
            double sum = 0.0;
            for (double v : head({l, h})) {
                if (!std::isfinite(v) || v < 0.0) {
                    throw InputError("attention record: head " + head_name({l, h}) +
                                     " has a negative or non-finite weight");
                }
                sum += v;
            }
            if (sum > 1.0 + sum_tolerance) {
                throw InputError("attention record: head " + head_name({l, h}) + " sums to " + std::to_string(sum));
            }
        }
    }
}

std::vector<double> patch_scores(std::span<const double> head_attn, const CoverageWeights& weights) {
    if (head_attn.size() != weights.weights.size()) {
        throw ShapeError("patch_scores: attention has " + std::to_string(head_attn.size()) +
                         " tokens, grid has " + std::to_string(weights.weights.size()) + " patches");
    }
    std::vector<double> r(head_attn.size());
    std::transform(weights.weights.begin(), weights.weights.end(), head_attn.begin(), r.begin(),
                   [](double w, double a) { return w * a; });
    return r;
}

HeadScoreTable head_scores(const AttentionRecord& record, const CoverageWeights& weights, const EvidenceStats& stats) {
    if (!(stats.rho > 0.0)) {
        throw NormalizationError("head_scores: evidence ratio rho is 0, normalized score undefined");
    }
    if (record.tokens != weights.weights.size()) {
        throw ShapeError("head_scores: attention has " + std::to_string(record.tokens) + " tokens, grid has " +
                         std::to_string(weights.weights.size()) + " patches");
    }
    HeadScoreTable table;
    table.rho = stats.rho;
    table.raw = ScoreMatrix(record.num_layers, record.num_heads);
    table.normalized = ScoreMatrix(record.num_layers, record.num_heads);
    // Fixed reduction order: layer-major, head-minor, patches row-major.
    for (int l = 0; l < record.num_layers; ++l) {
        for (int h = 0; h < record.num_heads; ++h) {
            const auto a = record.head({l, h});
            double sum = 0.0;
            for (std::size_t p = 0; p < a.size(); ++p) sum += weights.weights[p] * a[p];
            table.raw.at({l, h}) = sum;
            table.normalized.at({l, h}) = sum / stats.rho;
        }
    }
    return table;
}

VERHeadSet identify_ver_heads(const ScoreMatrix& normalized) {
    if (normalized.values.size() < 2) {
        throw DegenerateThresholdError("identify_ver_heads: need at least 2 heads");
    }
    const auto [lo, hi] = std::minmax_element(normalized.values.begin(), normalized.values.end());
    if (*lo == *hi) {
        throw DegenerateThresholdError("identify_ver_heads: all head scores are equal");
    }
    VERHeadSet set;
    set.tau = (*hi + *lo) / 2.0;
    for (int l = 0; l < normalized.num_layers; ++l) {
        for (int h = 0; h < normalized.num_heads; ++h) {
            if (normalized.at({l, h}) > set.tau) set.heads.push_back({l, h});
        }
    }
    return set;
}

VERHeadSet identify_ver_heads(const HeadScoreTable& table) { return identify_ver_heads(table.normalized); }

ScoreMatrix average_matrices(std::span<const ScoreMatrix> matrices) {
    if (matrices.empty()) {
        throw InputError("average: need at least one table");
    }
    ScoreMatrix avg(matrices.front().num_layers, matrices.front().num_heads);
    for (const auto& m : matrices) {
        if (m.num_layers != avg.num_layers || m.num_heads != avg.num_heads) {
            throw ShapeError("average: table dims differ");
        }
        for (std::size_t i = 0; i < avg.values.size(); ++i) avg.values[i] += m.values[i];
    }
    const auto n = static_cast<double>(matrices.size());
    for (double& v : avg.values) v /= n;
    return avg;
}

ScoreMatrix average_head_scores(std::span<const HeadScoreTable> tables) {
    std::vector<ScoreMatrix> normalized;
    normalized.reserve(tables.size());
    for (const auto& t : tables) normalized.push_back(t.normalized);
    return average_matrices(normalized);
}

std::vector<HeadId> top_k_heads(const ScoreMatrix& scores, std::size_t k) {
    const std::size_t n = scores.values.size();
    if (k < 1 || k > n) {
        throw RangeError("top_k_heads: k=" + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    // Flat index order equals (layer, head) order, so a stable sort keeps the tie rule.
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores.values[a] > scores.values[b]; });
    std::vector<HeadId> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        out.push_back({static_cast<int>(order[i] / static_cast<std::size_t>(scores.num_heads)),
                       static_cast<int>(order[i] % static_cast<std::size_t>(scores.num_heads))});
    }
    return out;
}

double token_entropy(std::span<const double> probs) {
    if (probs.empty()) {
        throw InputError("token_entropy: empty distribution");
    }
    double sum = 0.0;
    for (double p : probs) {
        if (!std::isfinite(p) || p < 0.0) {
            throw InputError("token_entropy: probabilities must be finite and non-negative");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-4) {
        throw InputError("token_entropy: probabilities sum to " + std::to_string(sum));
    }
    double h = 0.0;
    for (double p : probs) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return std::max(0.0, h);
}

double entropy_from_logits(std::span<const double> logits) {
    if (logits.empty()) {
        throw InputError("entropy_from_logits: empty logits");
    }
    const double m = *std::max_element(logits.begin(), logits.end());
    if (!std::isfinite(m)) {
        throw InputError("entropy_from_logits: non-finite logits");
    }
    double z = 0.0;
    for (double x : logits) z += std::exp(x - m);
    const double log_z = std::log(z);
    // H = log Z - sum p (x - m)
    double expect = 0.0;
    for (double x : logits) expect += std::exp(x - m - log_z) * (x - m);
    return std::max(0.0, log_z - expect);
}

RetrievalMoment first_high_entropy_step(const EntropyTrace& trace, double delta) {
    RetrievalMoment moment;
    moment.delta = delta;
    for (std::size_t t = 0; t < trace.entropies.size(); ++t) {
        if (trace.entropies[t] > delta) {
            moment.t_star = t;
            break;
        }
    }
    return moment;
}

std::vector<double> fractional_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        // Positions i..j (0-based) share the mean of ranks i+1..j+1.
        const double r = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double spearman_correlation(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ShapeError("spearman: vectors differ in length");
    }
    if (a.size() < 2) {
        throw InputError("spearman: need at least 2 values");
    }
    const auto ra = fractional_ranks(a);
    const auto rb = fractional_ranks(b);
    const double n = static_cast<double>(a.size());
    // Both rank vectors have mean (n + 1) / 2.
    const double mean = (n + 1.0) / 2.0;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        const double da = ra[i] - mean;
        const double db = rb[i] - mean;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) {
        throw InputError("spearman: zero rank variance");
    }
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double spearman_correlation(const ScoreMatrix& a, const ScoreMatrix& b) {
    if (a.num_layers != b.num_layers || a.num_heads != b.num_heads) {
        throw ShapeError("spearman: score matrices differ in shape");
    }
    return spearman_correlation(std::span<const double>(a.values), std::span<const double>(b.values));
}

HeadMaskSpec export_head_mask(std::span<const HeadId> heads, int num_layers, int num_heads) {
    HeadMaskSpec spec;
    for (const auto& h : heads) {
        if (h.layer < 0 || h.layer >= num_layers || h.head < 0 || h.head >= num_heads) {
            throw RangeError("export_head_mask: head " + head_name(h) + " outside " + std::to_string(num_layers) +
                             "x" + std::to_string(num_heads) + " topology");
        }
        spec.mask.push_back(h);
    }
    std::sort(spec.mask.begin(), spec.mask.end());
    spec.mask.erase(std::unique(spec.mask.begin(), spec.mask.end()), spec.mask.end());
    return spec;
}

}  // namespace verlab
