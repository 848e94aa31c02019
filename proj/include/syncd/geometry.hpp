#ifndef SYNCD_GEOMETRY_HPP
#define SYNCD_GEOMETRY_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "syncd/rng.hpp"
#include "syncd/tensor.hpp"

namespace syncd {

struct BehindCameraError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Pinhole camera. rotation/translation map world -> camera; camera frame is
// x-right, y-down, z-forward.
struct Camera {
    double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
    std::size_t height = 0, width = 0;

    Eigen::Vector3d to_camera(const Eigen::Vector3d& p) const { return rotation * p + translation; }
    Eigen::Vector3d center() const { return -rotation.transpose() * translation; }
    // World-space direction of the ray through pixel (u, v).
    Eigen::Vector3d pixel_ray(double u, double v) const;
};

struct PixelProjection {
    double u = 0.0, v = 0.0, depth = 0.0;
};

// u = fx*x/z + cx, v = fy*y/z + cy. Throws BehindCameraError when z <= 0.
PixelProjection project_point(const Camera& cam, const Eigen::Vector3d& p);

// Camera-space depth per pixel; 0 = no surface.
struct DepthMap {
    std::size_t height = 0, width = 0;
    std::vector<double> depth;  // row-major

    double at(std::size_t r, std::size_t c) const { return depth[r * width + c]; }
    double& at(std::size_t r, std::size_t c) { return depth[r * width + c]; }
    Tensor to_tensor() const { return Tensor({height, width}, depth); }
};

// Per destination pixel: offsets into the source image and binary visibility.
struct CorrespondenceMap {
    std::size_t height = 0, width = 0;
    std::vector<double> du, dv;          // row-major, offsets relative to dst pixel
    std::vector<std::uint8_t> alpha;     // 1 = visible in source
    std::vector<std::uint8_t> valid;     // dst pixel has a surface

    std::size_t idx(std::size_t r, std::size_t c) const { return r * width + c; }
};

struct View {
    Camera camera;
    DepthMap depth;
};

// Procedural scene of spheres and disks with exact ray-depth queries.
struct Sphere {
    Eigen::Vector3d center;
    double radius;
};
struct Disk {
    Eigen::Vector3d center;
    Eigen::Vector3d normal;  // unit
    double radius;
};

struct RayHit {
    double t;  // distance along the (unit) ray
    Eigen::Vector3d point;
};

class Scene {
public:
    static Scene random(std::uint64_t seed);

    void add_sphere(const Sphere& s) { spheres_.push_back(s); }
    void add_disk(const Disk& d) { disks_.push_back(d); }

    std::optional<RayHit> trace(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) const;
    DepthMap render_depth(const Camera& cam) const;

    Eigen::Vector3d centroid() const { return centroid_; }
    double diameter() const { return diameter_; }
    void set_bounds(const Eigen::Vector3d& centroid, double diameter);

    // Rigid transform of every primitive: p -> R*p + t.
    Scene transformed(const Eigen::Matrix3d& r, const Eigen::Vector3d& t) const;

    const std::vector<Sphere>& spheres() const { return spheres_; }

private:
    std::vector<Sphere> spheres_;
    std::vector<Disk> disks_;
    Eigen::Vector3d centroid_ = Eigen::Vector3d::Zero();
    double diameter_ = 2.0;
};

// For each dst pixel with a surface, unproject to world, reproject into src,
// and run the depth-consistency occlusion test with tolerance depth_tol.
CorrespondenceMap correspondence_map(const View& src, const View& dst, double depth_tol);

// Fraction of valid-depth dst pixels visible in the source view.
double overlap_fraction(const CorrespondenceMap& corr);

struct ViewSelectionError : std::runtime_error {
    ViewSelectionError(std::string msg, std::vector<View> best)
        : std::runtime_error(std::move(msg)), best_found(std::move(best)) {}
    std::vector<View> best_found;
};

// Upper-hemisphere cameras (elevation <= max_elevation_deg) looking at the
// scene centroid, resampled until every pair clears min_overlap. Fails after
// max_retries full resamples, carrying the best set found.
std::vector<View> select_views(const Scene& scene, Rng& rng, std::size_t n_views,
                               double min_overlap, std::size_t image_size = 32,
                               double max_elevation_deg = 70.0, std::size_t max_retries = 200);

// f_hat(u,v) = alpha * bilinear(f_src at (u+du, v+dv)) + (1-alpha) * f_dst(u,v).
// corr lives at image resolution; latent coordinates are corr coordinates
// divided by latent_scale (nearest-pixel lookup). A scaled source coordinate
// out of bounds with alpha=1 falls back to alpha=0.
Tensor warp_features(const Tensor& f_src, const Tensor& f_dst, const CorrespondenceMap& corr,
                     double latent_scale);

// Multi-source variant: visible warped contributions are averaged over all
// sources before the (1-alpha) blend.
Tensor warp_features_multi(const std::vector<const Tensor*>& f_srcs,
                           const std::vector<const CorrespondenceMap*>& corrs,
                           const Tensor& f_dst, double latent_scale);

// Flat text record per camera: fx fy cx cy, 9 rotation entries row-major,
// 3 translation entries, then height width.
void save_cameras(const std::filesystem::path& path, const std::vector<Camera>& cams);
std::vector<Camera> load_cameras(const std::filesystem::path& path);

}  // namespace syncd

#endif
