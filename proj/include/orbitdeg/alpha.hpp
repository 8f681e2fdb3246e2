#pragma once

#include "orbitdeg/polysys.hpp"

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace orbitdeg {

/// A square system together with the data the gamma bound needs.
struct SquareInstance {
  std::shared_ptr<const SystemEvaluator> system;
  std::vector<int> degrees;
  double weyl_norm = 0.0;

  explicit SquareInstance(std::shared_ptr<const SystemEvaluator> sys);
  std::size_t dim() const { return system->num_vars(); }
};

/// Jacobian too ill-conditioned for the working precision.
class SingularJacobian : public NumericalError {
 public:
  SingularJacobian(const std::string& what, double condition)
      : NumericalError(what), condition_(condition) {}
  double condition() const { return condition_; }

 private:
  double condition_;
};

/// Smale's alpha-theorem threshold and the same-zero radius factor.
inline constexpr double kAlphaThreshold = 0.03;
inline constexpr double kSameZeroFactor = 20.0;

/// |J(x)^{-1} F(x)|, at binary64 or at the current MPFR precision.
double beta(const SquareInstance& f, std::span<const cdouble> x);
double beta(const SquareInstance& f, std::span<const mpcomplex> x);

/// gamma(F, x) <= mu D^{3/2} / (2 |(1, x)|) with
/// mu = max(1, |F|_W |J^{-1} diag(sqrt(d_i) |(1, x)|^{d_i - 1})|_F).
double gamma_bound(const SquareInstance& f, std::span<const cdouble> x);
double gamma_bound(const SquareInstance& f, std::span<const mpcomplex> x);

struct AlphaCertificate {
  MPVector point;  // stored at the precision it was certified at
  double beta = 0.0;
  double gamma_bound = 0.0;
  double alpha = 0.0;
  unsigned precision_bits = 53;
  bool certified = false;
  bool soft = true;  // floating-point certificate
  std::string reason;

  CVector point_double() const { return to_double(point); }
  nlohmann::json to_json() const;
};

/// beta, gamma bound and alpha = beta * gamma_bound; certified iff alpha < 0.03.
/// A singular Jacobian yields an uncertified certificate with a reason.
AlphaCertificate certify_zero(const SquareInstance& f, std::span<const cdouble> x);
AlphaCertificate certify_zero(const SquareInstance& f, std::span<const mpcomplex> x);

struct RefineResult {
  MPVector point;
  double beta = 0.0;
  int iterations = 0;
  unsigned precision_bits = 0;
  std::vector<double> history;  // beta before each Newton step
};

/// Newton iteration at bits_for_digits(digits) bits until beta <= 10^-digits.
/// Throws NumericalError after 64 iterations. Sets the MPFR precision for its
/// duration, so it must not run concurrently with other MPFR work; use
/// refine_all for batches.
RefineResult refine(const SquareInstance& f, std::span<const cdouble> x, int digits);
RefineResult refine(const SquareInstance& f, std::span<const mpcomplex> x, int digits);

enum class PairVerdict { distinct, same_zero, undecided };
std::string to_string(PairVerdict v);

struct PairRecord {
  std::size_t i, j;
  PairVerdict verdict;
  double distance;
};

struct DistinctnessReport {
  std::size_t n_points = 0;
  /// Pairs examined exactly (all others are separated by the projection
  /// pruning and are distinct).
  std::size_t pairs_tested = 0;
  std::size_t same_zero = 0;
  std::size_t undecided = 0;
  int refinement_rounds = 0;
  /// Every pair that is not distinct.
  std::vector<PairRecord> flagged;
  bool all_distinct = false;

  nlohmann::json to_json() const;
};

/// Pair (x, y) is distinct if |x - y| > 2(beta(x) + beta(y)) and the same zero
/// if |x - y| < 1/(20 gamma_bound(x)). Undecided pairs are refined at doubled
/// digits and retested, up to three rounds. Candidates come from a sorted
/// random projection, which never drops a pair within the test radius.
DistinctnessReport certify_distinct(const SquareInstance& f, std::vector<AlphaCertificate>& certs,
                                    std::uint64_t seed = 1);

struct CertifyOptions {
  /// 0 certifies the binary64 points as given; otherwise points are refined
  /// to this many digits first.
  int digits = 0;
  unsigned workers = 1;
  std::uint64_t seed = 1;
};

struct CertifySummary {
  std::vector<AlphaCertificate> certificates;
  DistinctnessReport distinctness;
  std::size_t certified = 0;
  std::size_t refine_failures = 0;
  double max_alpha = 0.0;

  bool all_certified() const { return certified == certificates.size(); }
  nlohmann::json to_json() const;
};

/// Refines (optionally) and certifies every point in parallel, then checks
/// pairwise distinctness among the certified ones.
CertifySummary certify_set(const SquareInstance& f, const std::vector<CVector>& points,
                           const CertifyOptions& opts);

/// Refines a batch at one precision on several workers.
std::vector<RefineResult> refine_all(const SquareInstance& f, const std::vector<MPVector>& points,
                                     int digits, unsigned workers);

}  // namespace orbitdeg
