#include "noisyrl/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace nrl {

namespace {

void require_same_size(std::size_t a, std::size_t b) {
    if (a != b)
        throw std::invalid_argument("dimension mismatch: " + std::to_string(a) + " vs " +
                                    std::to_string(b));
}

}  // namespace

ProbVector::ProbVector(Vec entries) : v_(std::move(entries)) {
    if (v_.empty()) throw std::invalid_argument("ProbVector needs dimension >= 1");
    double s = 0.0;
    for (double x : v_) {
        if (!std::isfinite(x) || x < 0.0)
            throw std::invalid_argument("ProbVector entry must be finite and >= 0");
        s += x;
    }
    if (std::abs(s - 1.0) > kSimplexTol)
        throw std::invalid_argument("ProbVector entries must sum to 1");
}

ProbVector ProbVector::uniform(std::size_t d) { return ProbVector(Vec(d, 1.0 / double(d))); }

ProbVector ProbVector::vertex(std::size_t d, std::size_t i) {
    Vec v(d, 0.0);
    v.at(i) = 1.0;
    return ProbVector(std::move(v));
}

ProbVector ProbVector::normalized(Vec weights) {
    double s = 0.0;
    for (double &x : weights) {
        if (!std::isfinite(x)) throw std::invalid_argument("non-finite weight");
        x = std::max(x, 0.0);
        s += x;
    }
    if (!(s > 0.0)) throw std::invalid_argument("weights have no mass");
    for (double &x : weights) x /= s;
    return ProbVector(std::move(weights));
}

void renormalize(Vec &x) {
    double s = 0.0;
    bool neg = false;
    for (double &v : x) {
        if (v < 0.0) {
            v = 0.0;
            neg = true;
        }
        s += v;
    }
    if (neg || std::abs(s - 1.0) > kSimplexTol)
        for (double &v : x) v /= s;
}

double dot(const Vec &a, const Vec &b) {
    require_same_size(a.size(), b.size());
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double collision_mass(const Vec &x) { return std::inner_product(x.begin(), x.end(), x.begin(), 0.0); }

ProbVector softmax(const Vec &logits) {
    if (logits.empty()) throw std::invalid_argument("softmax needs dimension >= 1");
    double mx = -INFINITY;
    for (double v : logits) {
        if (!std::isfinite(v)) throw std::invalid_argument("softmax: non-finite logit");
        mx = std::max(mx, v);
    }
    Vec w(logits.size());
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += (w[i] = std::exp(logits[i] - mx));
    for (double &v : w) v /= s;
    return ProbVector(std::move(w));
}

TangentVector jacobian_apply(const ProbVector &p, const Vec &v) {
    require_same_size(p.size(), v.size());
    const double m = dot(p.values(), v);
    TangentVector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = p[i] * (v[i] - m);
    return out;
}

TangentVector replicator_field(const ProbVector &p, const Vec &A) { return jacobian_apply(p, A); }

TangentVector grpo_field(const ProbVector &p, const Vec &A) {
    return jacobian_apply(p, jacobian_apply(p, A));
}

ProbVector mirror_ascent_step(const ProbVector &p, const Vec &A, double eta) {
    require_same_size(p.size(), A.size());
    if (!(eta > 0.0)) throw std::invalid_argument("mirror_ascent_step: eta must be > 0");
    const double amax = *std::max_element(A.begin(), A.end());
    Vec w(p.size());
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = p[i] == 0.0 ? 0.0 : p[i] * std::exp(eta * (A[i] - amax));
        s += w[i];
    }
    for (double &v : w) v /= s;
    return ProbVector(std::move(w));
}

double kl_divergence(const ProbVector &a, const ProbVector &b) {
    require_same_size(a.size(), b.size());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] == 0.0) continue;
        if (b[i] == 0.0) throw std::domain_error("kl_divergence: support of a not in support of b");
        s += a[i] * std::log(a[i] / b[i]);
    }
    return std::max(s, 0.0);
}

double bhattacharyya_distance(const ProbVector &a, const ProbVector &b) {
    require_same_size(a.size(), b.size());
    double bc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) bc += std::sqrt(a[i] * b[i]);
    return 2.0 * std::acos(std::clamp(bc, -1.0, 1.0));
}

double BlockState::logit() const { return std::log(p) - std::log1p(-p); }

BlockState make_block(double p, std::size_t K, std::size_t M) {
    if (K == 0 || M == 0) throw std::invalid_argument("block sizes must be >= 1");
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("bad mass must lie in [0,1]");
    return BlockState{p, ProbVector::uniform(K), ProbVector::uniform(M)};
}

BlockState decompose(const ProbVector &flat, std::size_t K, std::size_t M) {
    if (K == 0 || M == 0) throw std::invalid_argument("decompose: K and M must be >= 1");
    require_same_size(flat.size(), K + M);
    const Vec &x = flat.values();
    double good = 0.0, bad = 0.0;
    for (std::size_t i = 0; i < K; ++i) good += x[i];
    for (std::size_t i = K; i < K + M; ++i) bad += x[i];
    auto shape = [&](std::size_t lo, std::size_t n, double mass) {
        if (mass == 0.0) return ProbVector::uniform(n);
        Vec s(x.begin() + lo, x.begin() + lo + n);
        double t = 0.0;
        for (double v : s) t += v;
        for (double &v : s) v /= t;
        return ProbVector(std::move(s));
    };
    const double p = std::clamp(bad / (good + bad), 0.0, 1.0);
    return BlockState{p, shape(0, K, good), shape(K, M, bad)};
}

ProbVector recompose(const BlockState &s) {
    Vec x;
    x.reserve(s.K() + s.M());
    for (double v : s.y) x.push_back((1.0 - s.p) * v);
    for (double v : s.z) x.push_back(s.p * v);
    return ProbVector(std::move(x));
}

}  // namespace nrl
