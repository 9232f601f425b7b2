// Antisymmetric coefficient fields over a patch: differential forms
// (covariant) and multivector fields (contravariant), plus the exterior
// calculus used throughout: wedge, d, contraction, Lie derivative, the
// degree-2 Schouten bracket, and pullbacks along explicit maps.
//
// Coefficients are stored only on strictly increasing index tuples; lookups
// of permuted tuples return the signed value.

#ifndef PBUMP_FIELDS_HPP
#define PBUMP_FIELDS_HPP

#include <Eigen/Dense>
#include <map>
#include <vector>

#include "pbump/expr.hpp"
#include "pbump/patch.hpp"

namespace pbump {

using IdxTuple = std::vector<int>;

// sorted copy and permutation sign; sign 0 on repeated indices
std::pair<IdxTuple, int> normalize_tuple(IdxTuple t);
std::vector<IdxTuple> increasing_tuples(int n, int p);
long binomial(int n, int k);

enum class Variance { Covariant, Contravariant };

template <Variance V>
class AltField {
public:
    AltField() = default;
    AltField(PatchPtr patch, int degree) : patch_(std::move(patch)), degree_(degree) {
        if (degree_ < 0 || degree_ > patch_->dim())
            throw std::invalid_argument("AltField: degree out of range");
    }

    const PatchPtr& patch() const { return patch_; }
    int degree() const { return degree_; }
    const std::map<IdxTuple, ScalarExpr>& coeffs() const { return coeffs_; }
    bool is_zero_field() const { return coeffs_.empty(); }

    // signed coefficient lookup for an arbitrary tuple
    ScalarExpr get(IdxTuple t) const;
    // overwrite (tuple may arrive unsorted; the sign is folded in)
    void set(IdxTuple t, ScalarExpr e);
    // accumulate
    void add_to(IdxTuple t, ScalarExpr e);
    void drop_zeros();

    AltField simplified() const;
    AltField scaled(const ScalarExpr& s) const;

    friend AltField operator+(const AltField& a, const AltField& b) {
        require_same_patch(a.patch_, b.patch_, "AltField+");
        if (a.degree_ != b.degree_) throw std::invalid_argument("AltField+: degree mismatch");
        AltField out = a;
        for (auto& [t, e] : b.coeffs_) out.add_to(t, e);
        return out;
    }

private:
    PatchPtr patch_;
    int degree_ = 0;
    std::map<IdxTuple, ScalarExpr> coeffs_;
};

using FormField = AltField<Variance::Covariant>;
using MultivectorField = AltField<Variance::Contravariant>;

template <Variance V>
AltField<V> wedge(const AltField<V>& a, const AltField<V>& b);

FormField exterior_d(const FormField& a);

// interior product of a vector field into a form
FormField contract(const MultivectorField& x, const FormField& a);
// interior product of a 1-form into a multivector
MultivectorField contract(const FormField& xi, const MultivectorField& t);

FormField lie_derivative(const MultivectorField& x, const FormField& a);
MultivectorField lie_derivative(const MultivectorField& x, const MultivectorField& t);

// Schouten-Nijenhuis bracket of two bivectors; [pi,pi] = 0 iff pi is Poisson.
MultivectorField schouten(const MultivectorField& a, const MultivectorField& b);

// ---------------------------------------------------------------------------

struct ExplicitMap {
    PatchPtr source;
    PatchPtr target;
    std::vector<ScalarExpr> comps;               // one per target variable
    std::vector<std::vector<ScalarExpr>> jac;    // jac[i][j] = d comps[i]/d x_j

    // substitute target variables by map components
    ScalarExpr pull_scalar(const ScalarExpr& e) const { return substitute(e, comps); }
    Eigen::MatrixXd jacobian_at(Evaluator& ev, std::span<const double> p) const;
};

ExplicitMap make_map(PatchPtr source, PatchPtr target, std::vector<ScalarExpr> comps);
ExplicitMap compose(const ExplicitMap& first, const ExplicitMap& then);

FormField pullback_form(const ExplicitMap& m, const FormField& a);

// pi_tilde(x) = J^{-1}(x) pi(m(x)) J^{-T}(x), J the Jacobian of m.  The map
// must be a local diffeomorphism; when sample points are supplied the
// Jacobian determinant is checked there.
MultivectorField pullback_bivector(const ExplicitMap& m, const MultivectorField& b,
                                   const std::vector<std::vector<double>>& diffeo_samples = {});

// pushforward of a bivector along an affine map y = L x + c
MultivectorField pushforward_bivector_affine(const Eigen::MatrixXd& L, const Eigen::VectorXd& c,
                                             const PatchPtr& target, const MultivectorField& b);

// --- symbolic dense linear algebra (small dimensions) -----------------------
ScalarExpr sym_det(const std::vector<std::vector<ScalarExpr>>& m);
std::vector<std::vector<ScalarExpr>> sym_adjugate(const std::vector<std::vector<ScalarExpr>>& m);

// matrix of a degree-2 field at a point (antisymmetric, full n x n)
template <Variance V>
Eigen::MatrixXd eval_antisym(const AltField<V>& f, Evaluator& ev, std::span<const double> p);

// dense coefficient vector over increasing_tuples(n, degree)
template <Variance V>
Eigen::VectorXd eval_dense(const AltField<V>& f, Evaluator& ev, std::span<const double> p);

// bivector with matrix Pi = -Omega^{-1} for a symbolic 2-form Omega; the sign
// convention makes e^{dx^dy} correspond to dx^dy-inverse = d/dx ^ d/dy
MultivectorField two_form_inverse(const FormField& omega);

}  // namespace pbump

#endif  // PBUMP_FIELDS_HPP
