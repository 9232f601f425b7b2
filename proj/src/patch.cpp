#include "pbump/patch.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace pbump {

bool simplex_contains(std::span<const double> p, double tol) {
    if (p.size() == 1) return p[0] >= -1.0 - tol && p[0] <= 1.0 + tol;
    double t = p.back();
    if (t < -1.0 - tol || t > 1.0 + tol) return false;
    if (t >= 1.0 - tol) {
        for (size_t i = 0; i + 1 < p.size(); ++i)
            if (std::abs(p[i]) > tol) return false;
        return true;
    }
    std::vector<double> x(p.size() - 1);
    for (size_t i = 0; i + 1 < p.size(); ++i) x[i] = 2.0 * p[i] / (1.0 - t);
    return simplex_contains(x, tol);
}

PatchSpec::PatchSpec(std::vector<std::string> names, Region region,
                     std::optional<std::string> collar_var)
    : names_(std::move(names)), region_(std::move(region)) {
    if (names_.empty()) throw std::invalid_argument("PatchSpec: empty variable list");
    std::set<std::string> seen(names_.begin(), names_.end());
    if (seen.size() != names_.size()) throw std::invalid_argument("PatchSpec: duplicate variable names");
    if (collar_var) {
        auto it = std::find(names_.begin(), names_.end(), *collar_var);
        if (it == names_.end()) throw std::invalid_argument("PatchSpec: collar variable not in varnames");
        collar_slot_ = (int)(it - names_.begin());
    }
    if (auto* box = std::get_if<BoxRegion>(&region_)) {
        if ((int)box->bounds.size() != dim())
            throw std::invalid_argument("PatchSpec: box bounds arity mismatch");
    }
    if (auto* col = std::get_if<CollarRegion>(&region_)) {
        if ((int)col->base.size() != dim() - 1)
            throw std::invalid_argument("PatchSpec: collar base arity mismatch");
        if (!collar_slot_) throw std::invalid_argument("PatchSpec: collar region needs a collar variable");
    }
}

int PatchSpec::slot(const std::string& name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) throw std::invalid_argument("PatchSpec: unknown identifier " + name);
    return (int)(it - names_.begin());
}

bool PatchSpec::contains(std::span<const double> p, double tol) const {
    if ((int)p.size() != dim()) return false;
    if (auto* box = std::get_if<BoxRegion>(&region_)) {
        for (int i = 0; i < dim(); ++i)
            if (p[i] < box->bounds[i][0] - tol || p[i] > box->bounds[i][1] + tol) return false;
        return true;
    }
    if (auto* ball = std::get_if<BallRegion>(&region_)) {
        double r2 = 0;
        for (double x : p) r2 += x * x;
        return std::sqrt(r2) <= ball->radius + tol;
    }
    if (auto* ann = std::get_if<AnnulusRegion>(&region_)) {
        double r2 = 0;
        for (double x : p) r2 += x * x;
        double r = std::sqrt(r2);
        return r >= ann->r0 - tol && r <= ann->r1 + tol;
    }
    if (std::get_if<SimplexRegion>(&region_)) return simplex_contains(p, tol);
    if (auto* col = std::get_if<CollarRegion>(&region_)) {
        int ts = *collar_slot_;
        if (p[ts] < col->t0 - tol) return false;
        int bi = 0;
        for (int i = 0; i < dim(); ++i) {
            if (i == ts) continue;
            if (p[i] < col->base[bi][0] - tol || p[i] > col->base[bi][1] + tol) return false;
            ++bi;
        }
        return true;
    }
    return false;
}

std::vector<std::array<double, 2>> PatchSpec::bounding_box(double collar_tmax) const {
    std::vector<std::array<double, 2>> bb(dim());
    if (auto* box = std::get_if<BoxRegion>(&region_)) return box->bounds;
    if (auto* ball = std::get_if<BallRegion>(&region_)) {
        for (auto& b : bb) b = {-ball->radius, ball->radius};
        return bb;
    }
    if (auto* ann = std::get_if<AnnulusRegion>(&region_)) {
        for (auto& b : bb) b = {-ann->r1, ann->r1};
        return bb;
    }
    if (std::get_if<SimplexRegion>(&region_)) {
        for (auto& b : bb) b = {-1.0, 1.0};
        return bb;
    }
    if (auto* col = std::get_if<CollarRegion>(&region_)) {
        int ts = *collar_slot_;
        int bi = 0;
        for (int i = 0; i < dim(); ++i) {
            if (i == ts) bb[i] = {col->t0, collar_tmax};
            else bb[i] = col->base[bi++];
        }
        return bb;
    }
    throw std::logic_error("PatchSpec: unknown region");
}

bool PatchSpec::same_as(const PatchSpec& o) const {
    return names_ == o.names_ && collar_slot_ == o.collar_slot_;
}

PatchPtr patch_box(std::vector<std::string> names, std::vector<std::array<double, 2>> bounds) {
    return std::make_shared<PatchSpec>(std::move(names), BoxRegion{std::move(bounds)});
}

PatchPtr patch_ball(std::vector<std::string> names, double radius) {
    return std::make_shared<PatchSpec>(std::move(names), BallRegion{radius});
}

PatchPtr patch_annulus(std::vector<std::string> names, double r0, double r1) {
    return std::make_shared<PatchSpec>(std::move(names), AnnulusRegion{r0, r1});
}

PatchPtr patch_simplex(int n) {
    std::vector<std::string> names;
    for (int i = 0; i < n; ++i) names.push_back("s" + std::to_string(i + 1));
    return std::make_shared<PatchSpec>(std::move(names), SimplexRegion{});
}

PatchPtr patch_collar(std::vector<std::string> base_names,
                      std::vector<std::array<double, 2>> base_bounds,
                      std::string collar_name, double t0) {
    base_names.push_back(collar_name);
    return std::make_shared<PatchSpec>(std::move(base_names),
                                       CollarRegion{std::move(base_bounds), t0}, collar_name);
}

void require_same_patch(const PatchPtr& a, const PatchPtr& b, const char* who) {
    if (!a || !b || (a != b && !a->same_as(*b)))
        throw std::invalid_argument(std::string(who) + ": patch mismatch");
}

}  // namespace pbump
