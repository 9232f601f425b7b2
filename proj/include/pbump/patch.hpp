// Coordinate patches: named variables plus a region.  All computation in the
// library happens on such patches; collars carry a distinguished variable t
// whose upper bound is infinite.

#ifndef PBUMP_PATCH_HPP
#define PBUMP_PATCH_HPP

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "pbump/expr.hpp"

namespace pbump {

struct BoxRegion {
    std::vector<std::array<double, 2>> bounds;  // per-axis [lo, hi]
};
struct BallRegion {
    double radius = 1.0;
};
struct AnnulusRegion {
    double r0 = 0.0, r1 = 1.0;
};
// The standard pyramid realization: simplex_1 = [-1,1], and
// simplex_{n+1} = { ((1-t)/2 x, t) : x in simplex_n, t in [-1,1] }.
struct SimplexRegion {};
// base box for the boundary variables, collar coordinate in [t0, infinity)
struct CollarRegion {
    std::vector<std::array<double, 2>> base;
    double t0 = 0.0;
};

using Region = std::variant<BoxRegion, BallRegion, AnnulusRegion, SimplexRegion, CollarRegion>;

bool simplex_contains(std::span<const double> p, double tol = 1e-12);

class PatchSpec {
public:
    PatchSpec(std::vector<std::string> names, Region region,
              std::optional<std::string> collar_var = std::nullopt);

    int dim() const { return (int)names_.size(); }
    const std::vector<std::string>& varnames() const { return names_; }
    const Region& region() const { return region_; }
    std::optional<int> collar_slot() const { return collar_slot_; }

    int slot(const std::string& name) const;  // throws on unknown identifier
    ScalarExpr v(const std::string& name) const { return var(slot(name), name); }
    ScalarExpr v(int s) const { return var(s, names_.at(s)); }

    bool contains(std::span<const double> p, double tol = 1e-12) const;
    // finite box enclosing the region; collar_tmax bounds the collar direction
    std::vector<std::array<double, 2>> bounding_box(double collar_tmax = 2.5) const;

    bool same_as(const PatchSpec& o) const;

private:
    std::vector<std::string> names_;
    Region region_;
    std::optional<int> collar_slot_;
};

using PatchPtr = std::shared_ptr<const PatchSpec>;

PatchPtr patch_box(std::vector<std::string> names, std::vector<std::array<double, 2>> bounds);
PatchPtr patch_ball(std::vector<std::string> names, double radius);
PatchPtr patch_annulus(std::vector<std::string> names, double r0, double r1);
PatchPtr patch_simplex(int n);
// boundary variables with a box region, plus a trailing collar variable
PatchPtr patch_collar(std::vector<std::string> base_names,
                      std::vector<std::array<double, 2>> base_bounds,
                      std::string collar_name, double t0);

void require_same_patch(const PatchPtr& a, const PatchPtr& b, const char* who);

}  // namespace pbump

#endif  // PBUMP_PATCH_HPP
