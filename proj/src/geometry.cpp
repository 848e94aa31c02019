#include "syncd/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

namespace syncd {

Eigen::Vector3d Camera::pixel_ray(double u, double v) const {
    Eigen::Vector3d dir_cam((u - cx) / fx, (v - cy) / fy, 1.0);
    return (rotation.transpose() * dir_cam).normalized();
}

PixelProjection project_point(const Camera& cam, const Eigen::Vector3d& p) {
    const Eigen::Vector3d pc = cam.to_camera(p);
    if (pc.z() <= 0.0) throw BehindCameraError("point behind camera, z=" + std::to_string(pc.z()));
    return {cam.fx * pc.x() / pc.z() + cam.cx, cam.fy * pc.y() / pc.z() + cam.cy, pc.z()};
}

CorrespondenceMap correspondence_map(const View& src, const View& dst, double depth_tol) {
    if (src.depth.height != dst.depth.height || src.depth.width != dst.depth.width)
        throw ShapeError("correspondence_map: depth map sizes disagree");
    const std::size_t h = dst.depth.height, w = dst.depth.width;
    CorrespondenceMap corr;
    corr.height = h;
    corr.width = w;
    corr.du.assign(h * w, 0.0);
    corr.dv.assign(h * w, 0.0);
    corr.alpha.assign(h * w, 0);
    corr.valid.assign(h * w, 0);

    const Eigen::Matrix3d rt = dst.camera.rotation.transpose();
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            const std::size_t i = corr.idx(r, c);
            const double z = dst.depth.at(r, c);
            if (z <= 0.0) continue;
            corr.valid[i] = 1;
            const double u = static_cast<double>(c), v = static_cast<double>(r);
            const Eigen::Vector3d pc((u - dst.camera.cx) / dst.camera.fx * z,
                                     (v - dst.camera.cy) / dst.camera.fy * z, z);
            const Eigen::Vector3d world = rt * (pc - dst.camera.translation);
            const Eigen::Vector3d ps = src.camera.to_camera(world);
            if (ps.z() <= 0.0) continue;
            double us = src.camera.fx * ps.x() / ps.z() + src.camera.cx;
            double vs = src.camera.fy * ps.y() / ps.z() + src.camera.cy;
            // Unproject/reproject round-off can push a boundary pixel a few
            // ulps outside the frame; accept and clamp rather than drop it.
            const double eps = 1e-9 * static_cast<double>(std::max(h, w));
            if (us < -eps || us > static_cast<double>(w - 1) + eps || vs < -eps ||
                vs > static_cast<double>(h - 1) + eps)
                continue;
            us = std::clamp(us, 0.0, static_cast<double>(w - 1));
            vs = std::clamp(vs, 0.0, static_cast<double>(h - 1));
            const auto rr = static_cast<std::size_t>(std::lround(vs));
            const auto cc = static_cast<std::size_t>(std::lround(us));
            const double src_depth = src.depth.at(std::min(rr, h - 1), std::min(cc, w - 1));
            if (src_depth <= 0.0 || std::abs(src_depth - ps.z()) > depth_tol) continue;
            corr.alpha[i] = 1;
            // Snap sub-ulp round-trip noise so an identity pair maps to itself.
            const double du = us - u, dv = vs - v;
            corr.du[i] = std::abs(du) < eps ? 0.0 : du;
            corr.dv[i] = std::abs(dv) < eps ? 0.0 : dv;
        }
    }
    return corr;
}

double overlap_fraction(const CorrespondenceMap& corr) {
    std::size_t valid = 0, visible = 0;
    for (std::size_t i = 0; i < corr.valid.size(); ++i) {
        if (corr.valid[i]) {
            ++valid;
            if (corr.alpha[i]) ++visible;
        }
    }
    if (valid == 0) throw RangeError("overlap_fraction: no valid-depth pixels");
    return static_cast<double>(visible) / static_cast<double>(valid);
}

namespace {
Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, double focal,
               std::size_t size) {
    const Eigen::Vector3d forward = (target - eye).normalized();
    Eigen::Vector3d right = forward.cross(Eigen::Vector3d::UnitZ());
    if (right.norm() < 1e-9) right = Eigen::Vector3d::UnitX();
    right.normalize();
    const Eigen::Vector3d down = forward.cross(right);
    Camera cam;
    cam.rotation.row(0) = right;
    cam.rotation.row(1) = down;
    cam.rotation.row(2) = forward;
    cam.translation = -cam.rotation * eye;
    cam.fx = cam.fy = focal;
    cam.cx = cam.cy = (static_cast<double>(size) - 1.0) / 2.0;
    cam.height = cam.width = size;
    return cam;
}
}  // namespace

std::vector<View> select_views(const Scene& scene, Rng& rng, std::size_t n_views,
                               double min_overlap, std::size_t image_size,
                               double max_elevation_deg, std::size_t max_retries) {
    if (n_views < 2) throw RangeError("select_views: n_views must be >= 2");
    // Nearest-pixel depth lookup errs by ~slope x pixel footprint on oblique
    // surfaces, so the occlusion tolerance must scale with scene size, not sit
    // at raytrace precision.
    const double depth_tol = 0.05 * scene.diameter();
    const double radius = 1.6 * scene.diameter();
    const double focal = 1.1 * static_cast<double>(image_size);

    double best_min = -1.0;
    std::vector<View> best;
    for (std::size_t attempt = 0; attempt <= max_retries; ++attempt) {
        std::vector<View> views;
        views.reserve(n_views);
        for (std::size_t i = 0; i < n_views; ++i) {
            const double azimuth = rng.uniform(0.0, 2.0 * M_PI);
            const double elevation = rng.uniform(0.0, max_elevation_deg * M_PI / 180.0);
            const Eigen::Vector3d eye =
                scene.centroid() + radius * Eigen::Vector3d(std::cos(elevation) * std::cos(azimuth),
                                                            std::cos(elevation) * std::sin(azimuth),
                                                            std::sin(elevation));
            Camera cam = look_at(eye, scene.centroid(), focal, image_size);
            views.push_back({cam, scene.render_depth(cam)});
        }
        double mn = 1.0;
        bool any_valid = true;
        for (std::size_t a = 0; a < n_views && any_valid; ++a) {
            for (std::size_t b = 0; b < n_views; ++b) {
                if (a == b) continue;
                try {
                    mn = std::min(mn, overlap_fraction(correspondence_map(views[a], views[b], depth_tol)));
                } catch (const RangeError&) {
                    any_valid = false;
                    break;
                }
            }
        }
        if (!any_valid) continue;
        if (mn >= min_overlap) return views;
        if (mn > best_min) {
            best_min = mn;
            best = std::move(views);
        }
    }
    throw ViewSelectionError("select_views: retry budget exhausted, best min overlap " +
                                 std::to_string(best_min),
                             std::move(best));
}

Tensor warp_features(const Tensor& f_src, const Tensor& f_dst, const CorrespondenceMap& corr,
                     double latent_scale) {
    std::vector<const Tensor*> srcs{&f_src};
    std::vector<const CorrespondenceMap*> corrs{&corr};
    return warp_features_multi(srcs, corrs, f_dst, latent_scale);
}

Tensor warp_features_multi(const std::vector<const Tensor*>& f_srcs,
                           const std::vector<const CorrespondenceMap*>& corrs,
                           const Tensor& f_dst, double latent_scale) {
    if (f_dst.rank() != 3) throw ShapeError("warp expects h x w x d features, got " + f_dst.shape_str());
    if (f_srcs.size() != corrs.size() || f_srcs.empty())
        throw ShapeError("warp: sources and correspondence maps disagree");
    const std::size_t h = f_dst.dim(0), w = f_dst.dim(1), d = f_dst.dim(2);
    for (const Tensor* s : f_srcs)
        if (!s->same_shape(f_dst)) throw ShapeError("warp: source feature shape mismatch");

    Tensor out = f_dst;
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            // Nearest image-resolution pixel for this latent cell.
            std::vector<double> acc(d, 0.0);
            std::size_t visible = 0;
            for (std::size_t s = 0; s < f_srcs.size(); ++s) {
                const CorrespondenceMap& corr = *corrs[s];
                const auto ir = std::min(corr.height - 1,
                                         static_cast<std::size_t>(std::lround(static_cast<double>(r) * latent_scale)));
                const auto ic = std::min(corr.width - 1,
                                         static_cast<std::size_t>(std::lround(static_cast<double>(c) * latent_scale)));
                const std::size_t i = corr.idx(ir, ic);
                if (!corr.alpha[i]) continue;
                const double su = static_cast<double>(c) + corr.du[i] / latent_scale;
                const double sv = static_cast<double>(r) + corr.dv[i] / latent_scale;
                if (su < 0.0 || su > static_cast<double>(w - 1) || sv < 0.0 ||
                    sv > static_cast<double>(h - 1))
                    continue;  // documented fallback: treat as invisible
                const std::vector<double> sample = bilinear_sample(*f_srcs[s], su, sv);
                for (std::size_t k = 0; k < d; ++k) acc[k] += sample[k];
                ++visible;
            }
            if (visible == 0) continue;
            double* o = out.data() + (r * w + c) * d;
            for (std::size_t k = 0; k < d; ++k) o[k] = acc[k] / static_cast<double>(visible);
        }
    }
    return out;
}

void save_cameras(const std::filesystem::path& path, const std::vector<Camera>& cams) {
    std::ofstream f(path);
    f << std::setprecision(17);
    for (const Camera& c : cams) {
        f << c.fx << " " << c.fy << " " << c.cx << " " << c.cy;
        for (int r = 0; r < 3; ++r)
            for (int k = 0; k < 3; ++k) f << " " << c.rotation(r, k);
        for (int k = 0; k < 3; ++k) f << " " << c.translation(k);
        f << " " << c.height << " " << c.width << "\n";
    }
}

std::vector<Camera> load_cameras(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw RangeError("cannot open camera file: " + path.string());
    std::vector<Camera> cams;
    Camera c;
    while (f >> c.fx >> c.fy >> c.cx >> c.cy) {
        for (int r = 0; r < 3; ++r)
            for (int k = 0; k < 3; ++k) f >> c.rotation(r, k);
        for (int k = 0; k < 3; ++k) f >> c.translation(k);
        f >> c.height >> c.width;
        cams.push_back(c);
    }
    return cams;
}

}  // namespace syncd
