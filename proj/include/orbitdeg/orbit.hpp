#pragma once

#include "orbitdeg/homotopy.hpp"
#include "orbitdeg/polysys.hpp"
#include "orbitdeg/rng.hpp"

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

namespace orbitdeg {

/// The fixed form f plus bookkeeping. stabilizer_order is user supplied.
struct Hypersurface {
  HomogeneousForm form;
  std::string provenance = "user";
  std::optional<std::uint64_t> seed;
  int stabilizer_order = 1;

  int n() const { return form.num_vars(); }
  int d() const { return form.degree(); }
};

/// Coefficients i.i.d. standard complex normal.
Hypersurface sample_hypersurface(int n, int d, std::uint64_t seed);

/// yzw + xzw + xyw + xyz, stabilizer S_4.
Hypersurface cayley_cubic();

/// Problem file {"n", "d", "form": <form> | {"seed": s} | {"named": "cayley"},
/// "stabilizer_order"}.
Hypersurface hypersurface_from_json(const nlohmann::json& j);
nlohmann::json hypersurface_to_json(const Hypersurface& h);

/// N points of P^{n-1}. Start pairs fix the first n-1 coordinates of each
/// point and solve for the last one.
struct PointConfig {
  int n = 0;
  std::vector<CVector> points;

  std::size_t size() const { return points.size(); }
  /// Row-major N x n parameter vector.
  CVector flatten() const;
  static PointConfig unflatten(int n, std::span<const cdouble> q);
};

nlohmann::json config_to_json(const PointConfig& c);
PointConfig config_from_json(const nlohmann::json& j);

/// Random configuration of N points with i.i.d. complex normal coordinates.
PointConfig random_config(int n, std::size_t count, Rng& rng);

/// Rows span the slice; (n^2 - 1) x C(n+d-1, d).
struct LinearSlice {
  CMatrix matrix;
};

struct StartPair {
  CVector phi0;  // row-major n x n
  PointConfig config;
  double residual_norm = 0.0;
};

/// phi as an n x n matrix from a row-major vector.
CMatrix as_matrix(std::span<const cdouble> phi, int n);

/// Entry of largest modulus scaled to 1.
CVector normalize_max_abs(std::span<const cdouble> v);

/// |det phi| of the max-abs normalized representative.
double normalized_abs_det(std::span<const cdouble> phi, int n);

/// Coefficients of phi . f (the image point). Throws NumericalError when the
/// image vanishes.
HomogeneousForm theta(const Hypersurface& f, std::span<const cdouble> phi);

/// Coefficients of theta as forms of degree d in the n^2 entries of phi.
std::vector<HomogeneousForm> theta_forms(const HomogeneousForm& f);

/// x -> f(phi q) as a degree-d form in the entries of phi.
HomogeneousForm point_equation(const HomogeneousForm& f, std::span<const cdouble> q);

/// N = n^2 - 1 equations f(phi p_i) = 0 in the n^2 entries of phi.
PolySystem build_point_system(const Hypersurface& f, const PointConfig& config,
                              std::optional<AffinePatch> patch = std::nullopt);

/// Rows of L applied to theta(phi), squared up with the patch.
PolySystem build_slice_system(const Hypersurface& f, const LinearSlice& slice,
                              const AffinePatch& patch);

/// Random affine chart l . phi = 1 on the entries of phi.
AffinePatch random_patch(int n, Rng& rng);

/// Veronese images of the points as rows; throws when rank < N.
LinearSlice veronese_slice(const PointConfig& config, int d);

/// Solves each point's last coordinate from a univariate equation; resamples
/// up to 5 times on failure.
StartPair start_pair(const Hypersurface& f, std::uint64_t seed);

/// count / stabilizer_order; throws std::domain_error when not divisible.
long long degree_report(long long count, int stabilizer_order);

/// Accepted-solution cutoff on normalized |det phi|.
inline constexpr double kDetThreshold = 1e-8;

// ---------------------------------------------------------------------------
// Structured evaluation. Every system handled here has rows of the form
//   F_r(phi) = sum_k (W_rk + t D_rk) f(phi q_k)
// for a list of points q_k: the point system has W = I, a slice L is
// represented as W = L V^{-1} through interpolation points, and the pencil
// moves one row along D.

struct SparseWeight {
  std::uint32_t point;
  cdouble weight;
};

class OrbitStructure {
 public:
  OrbitStructure(HomogeneousForm f, std::size_t num_points,
                 std::vector<std::vector<SparseWeight>> w,
                 std::vector<std::vector<SparseWeight>> dw = {});

  /// W = I on num_points points.
  static std::shared_ptr<const OrbitStructure> identity(const HomogeneousForm& f,
                                                        std::size_t num_points);

  int n() const { return form_.num_vars(); }
  int d() const { return form_.degree(); }
  std::size_t num_rows() const { return w_.size(); }
  std::size_t num_points() const { return num_points_; }
  const HomogeneousForm& form() const { return form_; }
  const std::vector<std::vector<SparseWeight>>& weights() const { return w_; }
  const std::vector<std::vector<SparseWeight>>& direction() const { return dw_; }

  /// Rows at (phi, points, t). Fills the Jacobian in phi when jac is non-null
  /// and, when hs is non-null, the derivative along (dpoints, dt).
  template <class S>
  void evaluate(std::span<const S> phi, std::span<const S> points, const S& t, std::span<S> values,
                Matrix<S>* jac, const S* dpoints = nullptr, const S* dt = nullptr,
                S* hs = nullptr) const;

  /// Row r as an explicit form in phi (for Weyl norms and cross-checks).
  HomogeneousForm expand_row(std::size_t r, std::span<const cdouble> points, cdouble t) const;

 private:
  HomogeneousForm form_;
  CompiledForm compiled_;
  std::size_t num_points_;
  std::vector<std::vector<SparseWeight>> w_;
  std::vector<std::vector<SparseWeight>> dw_;
};

/// Structured square (with patch) or projective (without) orbit system.
class OrbitSystem final : public SystemEvaluator {
 public:
  OrbitSystem(std::shared_ptr<const OrbitStructure> s, CVector points, cdouble t = 0.0,
              std::optional<AffinePatch> patch = std::nullopt);

  std::size_t num_equations() const override { return s_->num_rows() + (patch_ ? 1 : 0); }
  std::size_t num_vars() const override {
    return static_cast<std::size_t>(s_->n()) * static_cast<std::size_t>(s_->n());
  }
  void evaluate(std::span<const cdouble> x, std::span<cdouble> values,
                CMatrix* jacobian) const override;
  void evaluate(std::span<const mpcomplex> x, std::span<mpcomplex> values,
                MPMatrix* jacobian) const override;
  std::vector<int> degrees() const override;
  double weyl_norm() const override;
  using SystemEvaluator::evaluate;

  const OrbitStructure& structure() const { return *s_; }
  const CVector& points() const { return points_; }
  cdouble t() const { return t_; }
  const std::optional<AffinePatch>& patch() const { return patch_; }
  OrbitSystem with_patch(AffinePatch patch) const { return {s_, points_, t_, std::move(patch)}; }

  /// The same system as explicit forms.
  PolySystem expand() const;

 private:
  template <class S>
  void evaluate_impl(std::span<const S> x, std::span<S> values, Matrix<S>* jacobian) const;

  std::shared_ptr<const OrbitStructure> s_;
  CVector points_;
  cdouble t_;
  std::optional<AffinePatch> patch_;
  mutable std::once_flag norm_once_;
  mutable double norm_ = 0.0;
};

/// Segment homotopy in (points, t): points (1-s) qa + s qb, t (1-s) ta + s tb.
class OrbitHomotopy final : public Homotopy {
 public:
  OrbitHomotopy(std::shared_ptr<const OrbitStructure> s, CVector qa, CVector qb, cdouble ta = 0.0,
                cdouble tb = 0.0);

  std::size_t num_vars() const override {
    return static_cast<std::size_t>(s_->n()) * static_cast<std::size_t>(s_->n());
  }
  std::size_t num_equations() const override { return s_->num_rows(); }
  void evaluate(std::span<const cdouble> x, double s, std::span<cdouble> h, CMatrix* hx,
                std::span<cdouble> hs) const override;

 private:
  std::shared_ptr<const OrbitStructure> s_;
  CVector qa_, dq_;
  cdouble ta_, dt_;
};

/// Structured form of an arbitrary slice: W = L V^{-1} with V the Veronese
/// matrix of C(n+d-1, d) random interpolation points.
struct SliceRepresentation {
  std::shared_ptr<const OrbitStructure> structure;
  CVector points;
};
SliceRepresentation represent_slice(const HomogeneousForm& f, const LinearSlice& slice,
                                    std::uint64_t seed);

/// Veronese image of q in monomial_basis order.
CVector veronese(std::span<const cdouble> q, int d);

}  // namespace orbitdeg
