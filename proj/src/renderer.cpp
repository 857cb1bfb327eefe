#include "odi/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace odi {

namespace {

constexpr double kDegToRad = 0.017453292519943295;
constexpr double kNearEps = 1e-6;

struct CameraFrame {
    Vec3 position;
    Vec3 right, up, back; // orthonormal; back points from target to camera
};

CameraFrame camera_frame(const Camera& cam) {
    double e = cam.elevation * kDegToRad;
    double a = cam.azimuth * kDegToRad;
    CameraFrame f;
    f.position = Vec3{std::cos(e) * std::sin(a), std::sin(e), std::cos(e) * std::cos(a)} * cam.distance;
    f.back = f.position.normalized();
    Vec3 up0 = std::fabs(f.back.y) > 0.999 ? Vec3{0, 0, 1} : Vec3{0, 1, 0};
    f.right = up0.cross(f.back).normalized();
    f.up = f.back.cross(f.right);
    // roll about the view axis
    double t = cam.tilt * kDegToRad;
    Vec3 r = f.right * std::cos(t) + f.up * std::sin(t);
    Vec3 u = f.up * std::cos(t) - f.right * std::sin(t);
    f.right = r;
    f.up = u;
    return f;
}

inline double edge_fn(double ax, double ay, double bx, double by, double px, double py) {
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

// Bilinear texture taps for uv in [0,1]^2; v=1 samples texture row 0.
struct TexTaps {
    int idx[4];
    double w[4];
};

TexTaps texture_taps(double u, double v, int tex_w, int tex_h) {
    double tx = u * tex_w - 0.5;
    double ty = (1.0 - v) * tex_h - 0.5;
    double fx = std::floor(tx), fy = std::floor(ty);
    double ax = tx - fx, ay = ty - fy;
    int x0 = std::clamp(static_cast<int>(fx), 0, tex_w - 1);
    int x1 = std::clamp(static_cast<int>(fx) + 1, 0, tex_w - 1);
    int y0 = std::clamp(static_cast<int>(fy), 0, tex_h - 1);
    int y1 = std::clamp(static_cast<int>(fy) + 1, 0, tex_h - 1);
    TexTaps t;
    t.idx[0] = y0 * tex_w + x0; t.w[0] = (1.0 - ax) * (1.0 - ay);
    t.idx[1] = y0 * tex_w + x1; t.w[1] = ax * (1.0 - ay);
    t.idx[2] = y1 * tex_w + x0; t.w[2] = (1.0 - ax) * ay;
    t.idx[3] = y1 * tex_w + x1; t.w[3] = ax * ay;
    return t;
}

} // namespace

void Camera::validate() const {
    if (!(fov_y > 0.0 && fov_y < 180.0)) throw std::invalid_argument("camera: fov_y out of (0,180)");
    if (!(distance > 0.0)) throw std::invalid_argument("camera: distance must be > 0");
    if (resolution < 1) throw std::invalid_argument("camera: resolution must be >= 1");
}

std::vector<ProjectedVertex> project_vertices(const Mesh& mesh, const Camera& cam) {
    cam.validate();
    CameraFrame f = camera_frame(cam);
    double tan_half = std::tan(0.5 * cam.fov_y * kDegToRad);
    double half_res = 0.5 * cam.resolution;
    std::vector<ProjectedVertex> out(mesh.vertices.size());
    for (size_t i = 0; i < mesh.vertices.size(); ++i) {
        Vec3 rel = mesh.vertices[i] - f.position;
        double vx = rel.dot(f.right);
        double vy = rel.dot(f.up);
        double depth = -rel.dot(f.back); // camera looks along -back
        ProjectedVertex& p = out[i];
        p.depth = depth;
        if (depth > kNearEps) {
            double ndc_x = vx / (depth * tan_half);
            double ndc_y = vy / (depth * tan_half);
            p.sx = (ndc_x + 1.0) * half_res;
            p.sy = (1.0 - ndc_y) * half_res;
        } else {
            p.sx = p.sy = 0.0; // triangle will be skipped
        }
    }
    return out;
}

RenderOutput render(const Mesh& mesh, const Image& texture, const Camera& cam, const PointLight& light) {
    if (mesh.tris.empty()) throw std::invalid_argument("render: empty mesh");
    cam.validate();

    const int res = cam.resolution;
    RenderOutput ro;
    ro.image = Image(res, res);
    ro.coverage.assign(static_cast<size_t>(res) * res, 0);
    ro.texel_map.assign(static_cast<size_t>(res) * res, PixelTexels{});
    std::vector<double> zbuf(static_cast<size_t>(res) * res, -std::numeric_limits<double>::infinity());

    CameraFrame frame = camera_frame(cam);
    std::vector<ProjectedVertex> proj = project_vertices(mesh, cam);

    for (const Mesh::Tri& tri : mesh.tris) {
        const ProjectedVertex& p0 = proj[tri.v[0]];
        const ProjectedVertex& p1 = proj[tri.v[1]];
        const ProjectedVertex& p2 = proj[tri.v[2]];
        if (p0.depth <= kNearEps || p1.depth <= kNearEps || p2.depth <= kNearEps) continue;

        double area = edge_fn(p0.sx, p0.sy, p1.sx, p1.sy, p2.sx, p2.sy);
        if (area == 0.0) continue;

        int min_x = std::max(0, static_cast<int>(std::floor(std::min({p0.sx, p1.sx, p2.sx}))) - 1);
        int max_x = std::min(res - 1, static_cast<int>(std::ceil(std::max({p0.sx, p1.sx, p2.sx}))) + 1);
        int min_y = std::max(0, static_cast<int>(std::floor(std::min({p0.sy, p1.sy, p2.sy}))) - 1);
        int max_y = std::min(res - 1, static_cast<int>(std::ceil(std::max({p0.sy, p1.sy, p2.sy}))) + 1);
        if (min_x > max_x || min_y > max_y) continue;

        const Vec3& w0 = mesh.vertices[tri.v[0]];
        const Vec3& w1 = mesh.vertices[tri.v[1]];
        const Vec3& w2 = mesh.vertices[tri.v[2]];
        Vec3 normal = (w1 - w0).cross(w2 - w0).normalized();
        Vec3 centroid = (w0 + w1 + w2) * (1.0 / 3.0);
        if (normal.dot(frame.position - centroid) < 0.0) normal = normal * -1.0;

        double inv_d0 = 1.0 / p0.depth, inv_d1 = 1.0 / p1.depth, inv_d2 = 1.0 / p2.depth;

        for (int py = min_y; py <= max_y; ++py) {
            double cy = py + 0.5;
            for (int px = min_x; px <= max_x; ++px) {
                double cx = px + 0.5;
                double l0 = edge_fn(p1.sx, p1.sy, p2.sx, p2.sy, cx, cy) / area;
                double l1 = edge_fn(p2.sx, p2.sy, p0.sx, p0.sy, cx, cy) / area;
                double l2 = edge_fn(p0.sx, p0.sy, p1.sx, p1.sy, cx, cy) / area;
                if (l0 < 0.0 || l1 < 0.0 || l2 < 0.0) continue;

                double inv_depth = l0 * inv_d0 + l1 * inv_d1 + l2 * inv_d2;
                size_t pi = static_cast<size_t>(py) * res + px;
                if (inv_depth <= zbuf[pi]) continue; // first writer keeps ties
                zbuf[pi] = inv_depth;

                // perspective-correct interpolation
                double b0 = l0 * inv_d0 / inv_depth;
                double b1 = l1 * inv_d1 / inv_depth;
                double b2 = l2 * inv_d2 / inv_depth;
                double u = b0 * tri.uv[0].u + b1 * tri.uv[1].u + b2 * tri.uv[2].u;
                double v = b0 * tri.uv[0].v + b1 * tri.uv[1].v + b2 * tri.uv[2].v;
                Vec3 pos = w0 * b0 + w1 * b1 + w2 * b2;

                Vec3 to_light = (light.position - pos).normalized();
                Vec3 to_cam = (frame.position - pos).normalized();
                double ndotl = std::max(0.0, normal.dot(to_light));
                double shade = light.ambient + light.diffuse * ndotl;
                Vec3 refl = normal * (2.0 * normal.dot(to_light)) - to_light;
                double rdotv = std::max(0.0, refl.dot(to_cam));
                double spec = light.specular_strength * light.diffuse * std::pow(rdotv, light.shininess);

                TexTaps taps = texture_taps(u, v, texture.width, texture.height);
                PixelTexels& pt = ro.texel_map[pi];
                pt.tap_count = 4;
                pt.active = 0;
                for (int k = 0; k < 4; ++k) pt.taps[k] = TexelTap{taps.idx[k], shade * taps.w[k]};
                for (int c = 0; c < 3; ++c) {
                    double acc = spec;
                    for (int k = 0; k < 4; ++k)
                        acc += pt.taps[k].w * texture.data[static_cast<size_t>(taps.idx[k]) * 3 + c];
                    if (acc < 0.0) {
                        pt.constant[c] = 0.0;
                    } else if (acc > 1.0) {
                        pt.constant[c] = 1.0;
                    } else {
                        pt.constant[c] = spec;
                        pt.active |= static_cast<uint8_t>(1u << c);
                    }
                    ro.image.data[pi * 3 + c] = std::clamp(acc, 0.0, 1.0);
                }
                ro.coverage[pi] = 1;
            }
        }
    }
    return ro;
}

Image blend(const RenderOutput& ro, const Image& background) {
    if (!ro.image.same_shape(background))
        throw std::invalid_argument("blend: resolution mismatch");
    Image out = background;
    for (size_t pi = 0; pi < ro.coverage.size(); ++pi)
        if (ro.coverage[pi])
            for (int c = 0; c < 3; ++c) out.data[pi * 3 + c] = ro.image.data[pi * 3 + c];
    return out;
}

double fit_distance(const Mesh& mesh, double fov_y_deg, double target) {
    if (mesh.vertices.empty()) throw std::invalid_argument("fit_distance: empty mesh");
    double r = mesh.bounding_radius();
    if (r <= 0.0) throw std::invalid_argument("fit_distance: degenerate mesh");
    double tan_half = std::tan(0.5 * fov_y_deg * kDegToRad);
    auto coverage = [&](double d) {
        double cov = 0.0;
        for (const Vec3& v : mesh.vertices) {
            double depth = d - v.z;
            if (depth <= kNearEps) return std::numeric_limits<double>::infinity();
            double extent = std::max(std::fabs(v.x), std::fabs(v.y)) / (depth * tan_half);
            cov = std::max(cov, extent);
        }
        return cov;
    };
    double lo = r * 1.05, hi = r * 1000.0;
    if (coverage(lo) <= target) return lo;
    for (int it = 0; it < 100; ++it) {
        double mid = 0.5 * (lo + hi);
        if (coverage(mid) > target)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

namespace {

Image blurred_background(const Image& x, int resolution, std::vector<uint8_t>* active) {
    Image resized = bilinear_resize(x, resolution, resolution);
    Kernel k = gaussian_kernel_any(kBackgroundBlurSize, kBackgroundBlurSigma);
    Image blurred = conv2d_same(resized, k);
    if (active) active->assign(static_cast<size_t>(resolution) * resolution, 0);
    for (size_t pi = 0; pi < blurred.data.size() / 3; ++pi) {
        uint8_t bits = 0;
        for (int c = 0; c < 3; ++c) {
            double v = blurred.data[pi * 3 + c];
            if (v < 0.0)
                blurred.data[pi * 3 + c] = 0.0;
            else if (v > 1.0)
                blurred.data[pi * 3 + c] = 1.0;
            else
                bits |= static_cast<uint8_t>(1u << c);
        }
        if (active) (*active)[pi] = bits;
    }
    return blurred;
}

Mesh scene_mesh(const SourceObject& obj, const SceneConfig& config) {
    Mesh scaled = obj.mesh;
    if (obj.base_scale != 1.0)
        for (Vec3& v : scaled.vertices) v = v * obj.base_scale;
    return layout_instances(scaled, config.instance_count);
}

} // namespace

std::pair<Image, OdiRecord> odi_forward(const Image& x, const SceneSample& sample,
                                        const ObjectPool& pool, const SceneConfig& config) {
    config.validate();
    if (sample.object_index < 0 || sample.object_index >= static_cast<int>(pool.objects.size()))
        throw std::invalid_argument("odi_forward: object index out of range");
    const SourceObject& obj = pool.objects[sample.object_index];

    auto [texture, canvas_rec] = prepare_texture(obj, sample, x);
    Mesh mesh = scene_mesh(obj, config);
    double base_distance = fit_distance(mesh, kFovY, kFrameCoverage);

    Camera cam;
    cam.elevation = sample.elevation;
    cam.azimuth = sample.azimuth;
    cam.tilt = sample.tilt;
    cam.distance = base_distance * sample.distance_mul;
    cam.fov_y = kFovY;
    cam.resolution = config.render_resolution;

    PointLight light;
    light.position = sample.light_pos;
    light.ambient = sample.ambient;
    light.diffuse = sample.diffuse;
    light.specular_strength = config.specular_strength;
    light.shininess = config.shininess;

    RenderOutput ro = render(mesh, texture, cam, light);

    OdiRecord rec;
    rec.canvas = canvas_rec;
    rec.resolution = config.render_resolution;
    rec.coverage = std::move(ro.coverage);
    rec.texel_map = std::move(ro.texel_map);
    rec.bg_from_input = config.background_mode == BackgroundMode::blurred_input;
    if (rec.bg_from_input) {
        rec.background = blurred_background(x, config.render_resolution, &rec.bg_active);
    } else {
        Rng bg_rng(sample.background_seed);
        rec.background = make_background(config.background_mode, bg_rng, x, config.render_resolution);
    }

    Image out = rec.background;
    for (size_t pi = 0; pi < rec.coverage.size(); ++pi)
        if (rec.coverage[pi])
            for (int c = 0; c < 3; ++c) out.data[pi * 3 + c] = ro.image.data[pi * 3 + c];
    return {std::move(out), std::move(rec)};
}

Image odi_replay(const OdiRecord& rec, const Image& x) {
    Image texture = canvas_replay(rec.canvas, x);
    Image out = rec.bg_from_input ? blurred_background(x, rec.resolution, nullptr) : rec.background;
    for (size_t pi = 0; pi < rec.coverage.size(); ++pi) {
        if (!rec.coverage[pi]) continue;
        const PixelTexels& pt = rec.texel_map[pi];
        for (int c = 0; c < 3; ++c) {
            if (pt.active & (1u << c)) {
                double acc = pt.constant[c];
                for (int k = 0; k < pt.tap_count; ++k)
                    acc += pt.taps[k].w * texture.data[static_cast<size_t>(pt.taps[k].texel) * 3 + c];
                out.data[pi * 3 + c] = std::clamp(acc, 0.0, 1.0);
            } else {
                out.data[pi * 3 + c] = pt.constant[c];
            }
        }
    }
    return out;
}

GradientField odi_backward(const OdiRecord& rec, const GradientField& grad_out) {
    if (grad_out.width != rec.resolution || grad_out.height != rec.resolution)
        throw std::invalid_argument("odi_backward: gradient shape mismatch");

    GradientField grad_tex(rec.canvas.tex_size, rec.canvas.tex_size);
    GradientField grad_bg;
    if (rec.bg_from_input) grad_bg = GradientField(rec.resolution, rec.resolution);

    for (size_t pi = 0; pi < rec.coverage.size(); ++pi) {
        if (rec.coverage[pi]) {
            const PixelTexels& pt = rec.texel_map[pi];
            for (int c = 0; c < 3; ++c) {
                if (!(pt.active & (1u << c))) continue;
                double g = grad_out.data[pi * 3 + c];
                if (g == 0.0) continue;
                for (int k = 0; k < pt.tap_count; ++k)
                    grad_tex.data[static_cast<size_t>(pt.taps[k].texel) * 3 + c] += pt.taps[k].w * g;
            }
        } else if (rec.bg_from_input) {
            for (int c = 0; c < 3; ++c)
                if (rec.bg_active[pi] & (1u << c))
                    grad_bg.data[pi * 3 + c] = grad_out.data[pi * 3 + c];
        }
    }

    GradientField grad_x = canvas_adjoint(rec.canvas, grad_tex);
    if (rec.bg_from_input) {
        Kernel k = gaussian_kernel_any(kBackgroundBlurSize, kBackgroundBlurSigma);
        GradientField g_resized = conv2d_same_adjoint(grad_bg, k);
        GradientField g_in = bilinear_resize_adjoint(g_resized, rec.canvas.in_w, rec.canvas.in_h);
        for (size_t i = 0; i < grad_x.data.size(); ++i) grad_x.data[i] += g_in.data[i];
    }
    return grad_x;
}

} // namespace odi
