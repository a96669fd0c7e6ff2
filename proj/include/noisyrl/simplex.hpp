#ifndef NOISYRL_SIMPLEX_HPP
#define NOISYRL_SIMPLEX_HPP

#include <cstddef>
#include <vector>

namespace nrl {

using Vec = std::vector<double>;
using TangentVector = Vec;

inline constexpr double kSimplexTol = 1e-12;

// Point on the probability simplex. Immutable once built.
class ProbVector {
  public:
    explicit ProbVector(Vec entries);

    static ProbVector uniform(std::size_t d);
    static ProbVector vertex(std::size_t d, std::size_t i);
    // Clamps negatives to zero and rescales to unit mass.
    static ProbVector normalized(Vec weights);

    std::size_t size() const { return v_.size(); }
    double operator[](std::size_t i) const { return v_[i]; }
    const Vec &values() const { return v_; }
    auto begin() const { return v_.begin(); }
    auto end() const { return v_.end(); }

  private:
    Vec v_;
};

// Clamp at 0 and renormalize when the mass drifts by more than kSimplexTol.
void renormalize(Vec &x);

double dot(const Vec &a, const Vec &b);
double collision_mass(const Vec &x);

ProbVector softmax(const Vec &logits);

// J(p) v = p .* (v - <p,v> 1)
TangentVector jacobian_apply(const ProbVector &p, const Vec &v);
TangentVector replicator_field(const ProbVector &p, const Vec &A);
// J(p) (J(p) A); eta is left to the caller
TangentVector grpo_field(const ProbVector &p, const Vec &A);

ProbVector mirror_ascent_step(const ProbVector &p, const Vec &A, double eta);

double kl_divergence(const ProbVector &a, const ProbVector &b);
double bhattacharyya_distance(const ProbVector &a, const ProbVector &b);

struct BlockState {
    double p;
    ProbVector y;
    ProbVector z;

    std::size_t K() const { return y.size(); }
    std::size_t M() const { return z.size(); }
    double s2() const { return collision_mass(y.values()); }
    double t2() const { return collision_mass(z.values()); }
    double c_geo() const { return s2() + t2(); }
    double logit() const;
};

BlockState make_block(double p, std::size_t K, std::size_t M);
BlockState decompose(const ProbVector &flat, std::size_t K, std::size_t M);
ProbVector recompose(const BlockState &s);

}  // namespace nrl

#endif
