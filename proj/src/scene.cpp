#include "syncd/geometry.hpp"

#include <cmath>
#include <limits>

namespace syncd {

namespace {
std::optional<double> hit_sphere(const Sphere& s, const Eigen::Vector3d& o,
                                 const Eigen::Vector3d& d) {
    const Eigen::Vector3d oc = o - s.center;
    const double b = oc.dot(d);
    const double c = oc.squaredNorm() - s.radius * s.radius;
    const double disc = b * b - c;
    if (disc < 0.0) return std::nullopt;
    const double sq = std::sqrt(disc);
    double t = -b - sq;
    if (t <= 1e-9) t = -b + sq;
    if (t <= 1e-9) return std::nullopt;
    return t;
}

std::optional<double> hit_disk(const Disk& dk, const Eigen::Vector3d& o,
                               const Eigen::Vector3d& d) {
    const double denom = dk.normal.dot(d);
    if (std::abs(denom) < 1e-12) return std::nullopt;
    const double t = dk.normal.dot(dk.center - o) / denom;
    if (t <= 1e-9) return std::nullopt;
    if ((o + t * d - dk.center).norm() > dk.radius) return std::nullopt;
    return t;
}
}  // namespace

std::optional<RayHit> Scene::trace(const Eigen::Vector3d& origin,
                                   const Eigen::Vector3d& dir) const {
    double best = std::numeric_limits<double>::infinity();
    for (const Sphere& s : spheres_) {
        if (auto t = hit_sphere(s, origin, dir)) best = std::min(best, *t);
    }
    for (const Disk& d : disks_) {
        if (auto t = hit_disk(d, origin, dir)) best = std::min(best, *t);
    }
    if (!std::isfinite(best)) return std::nullopt;
    return RayHit{best, origin + best * dir};
}

DepthMap Scene::render_depth(const Camera& cam) const {
    DepthMap dm;
    dm.height = cam.height;
    dm.width = cam.width;
    dm.depth.assign(cam.height * cam.width, 0.0);
    const Eigen::Vector3d origin = cam.center();
    for (std::size_t r = 0; r < cam.height; ++r) {
        for (std::size_t c = 0; c < cam.width; ++c) {
            const Eigen::Vector3d dir =
                cam.pixel_ray(static_cast<double>(c), static_cast<double>(r));
            if (auto hit = trace(origin, dir)) {
                dm.at(r, c) = cam.to_camera(hit->point).z();
            }
        }
    }
    return dm;
}

void Scene::set_bounds(const Eigen::Vector3d& centroid, double diameter) {
    centroid_ = centroid;
    diameter_ = diameter;
}

Scene Scene::transformed(const Eigen::Matrix3d& r, const Eigen::Vector3d& t) const {
    Scene out = *this;
    for (Sphere& s : out.spheres_) s.center = r * s.center + t;
    for (Disk& d : out.disks_) {
        d.center = r * d.center + t;
        d.normal = r * d.normal;
    }
    out.centroid_ = r * centroid_ + t;
    return out;
}

Scene Scene::random(std::uint64_t seed) {
    Rng rng(seed);
    Scene scene;
    // Ground disk slightly below the object cluster.
    scene.add_disk({Eigen::Vector3d(0, 0, -0.4), Eigen::Vector3d::UnitZ(), 3.0});
    const std::size_t n = 2 + rng.next_below(3);
    for (std::size_t i = 0; i < n; ++i) {
        const double radius = rng.uniform(0.25, 0.55);
        scene.add_sphere({Eigen::Vector3d(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6),
                                          rng.uniform(-0.1, 0.5)),
                          radius});
    }
    scene.set_bounds(Eigen::Vector3d(0, 0, 0.1), 2.2);
    return scene;
}

}  // namespace syncd
