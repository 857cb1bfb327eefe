#include "odi/scene.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace odi {

void SourceObject::validate() const {
    mesh.validate();
    if (texture_size < 2) throw std::runtime_error("object " + name + ": texture too small");
    if (!(bx0 < bx1 && by0 < by1))
        throw std::runtime_error("object " + name + ": degenerate canvas rect");
    if (bx0 < 1 || by0 < 1 || bx1 > texture_size - 1 || by1 > texture_size - 1)
        throw std::runtime_error("object " + name + ": canvas rect not strictly inside texture");
    if (!(base_scale > 0.0)) throw std::runtime_error("object " + name + ": base_scale must be > 0");
}

void ObjectPool::validate() const {
    if (objects.empty()) throw std::runtime_error("object pool is empty");
    std::set<std::string> names;
    for (const SourceObject& o : objects) {
        o.validate();
        if (!names.insert(o.name).second)
            throw std::runtime_error("object pool: duplicate name " + o.name);
    }
}

void SceneConfig::validate() const {
    auto chk = [](const Range& r, const char* what) {
        if (r.lo > r.hi) throw std::runtime_error(std::string("scene config: inverted range for ") + what);
    };
    chk(texture_color, "texture_color");
    chk(angle, "angle");
    chk(distance, "distance");
    chk(ambient, "ambient");
    chk(diffuse, "diffuse");
    chk(light_translation, "light_translation");
    if (instance_count < 1) throw std::runtime_error("scene config: instance_count must be >= 1");
    if (render_resolution < 1) throw std::runtime_error("scene config: render_resolution must be >= 1");
}

BackgroundMode background_mode_from_string(const std::string& s) {
    if (s == "random_pixel") return BackgroundMode::random_pixel;
    if (s == "random_solid") return BackgroundMode::random_solid;
    if (s == "blurred_input") return BackgroundMode::blurred_input;
    if (s == "black") return BackgroundMode::black;
    throw std::runtime_error("unknown background mode: " + s);
}

std::string to_string(BackgroundMode m) {
    switch (m) {
        case BackgroundMode::random_pixel: return "random_pixel";
        case BackgroundMode::random_solid: return "random_solid";
        case BackgroundMode::blurred_input: return "blurred_input";
        case BackgroundMode::black: return "black";
    }
    return "?";
}

namespace {

// v=1 maps to texture row 0; see renderer uv sampling.
Vec2 uv_at(double u, double v) { return Vec2{u, v}; }

void push_quad(Mesh& m, int a, int b, int c, int d,
               Vec2 ua, Vec2 ub, Vec2 uc, Vec2 ud) {
    m.tris.push_back({{a, b, c}, {ua, ub, uc}});
    m.tris.push_back({{a, c, d}, {ua, uc, ud}});
}

SourceObject make_slab() {
    SourceObject obj;
    obj.name = "slab";
    obj.texture_size = 256;
    obj.bx0 = 8; obj.by0 = 8; obj.bx1 = 168; obj.by1 = 216; // whole front face

    const double a = 0.5, b = 0.65, c = 0.075;
    Mesh& m = obj.mesh;
    m.vertices = {
        {-a, -b, c}, {a, -b, c}, {a, b, c}, {-a, b, c},     // front
        {-a, -b, -c}, {a, -b, -c}, {a, b, -c}, {-a, b, -c}, // back
    };
    const double ts = obj.texture_size;
    double ul = obj.bx0 / ts, ur = obj.bx1 / ts;
    double vt = 1.0 - obj.by0 / ts, vb = 1.0 - obj.by1 / ts;
    push_quad(m, 0, 1, 2, 3, uv_at(ul, vb), uv_at(ur, vb), uv_at(ur, vt), uv_at(ul, vt));

    // remaining faces live in small regions of the spare strip; they only
    // ever show the fill color
    auto strip = [&](int k) {
        double u0 = 180 / ts, u1 = 244 / ts;
        double v1 = 1.0 - (k * 48 + 8) / ts, v0 = 1.0 - (k * 48 + 40) / ts;
        return std::array<Vec2, 4>{uv_at(u0, v0), uv_at(u1, v0), uv_at(u1, v1), uv_at(u0, v1)};
    };
    auto s0 = strip(0);
    push_quad(m, 5, 4, 7, 6, s0[0], s0[1], s0[2], s0[3]); // back
    auto s1 = strip(1);
    push_quad(m, 4, 0, 3, 7, s1[0], s1[1], s1[2], s1[3]); // left
    auto s2 = strip(2);
    push_quad(m, 1, 5, 6, 2, s2[0], s2[1], s2[2], s2[3]); // right
    auto s3 = strip(3);
    push_quad(m, 3, 2, 6, 7, s3[0], s3[1], s3[2], s3[3]); // top
    auto s4 = strip(4);
    push_quad(m, 4, 5, 1, 0, s4[0], s4[1], s4[2], s4[3]); // bottom
    return obj;
}

SourceObject make_cushion() {
    SourceObject obj;
    obj.name = "cushion";
    obj.texture_size = 256;
    obj.bx0 = 48; obj.by0 = 48; obj.bx1 = 208; obj.by1 = 208;

    const double rx = 0.65, ry = 0.65, rz = 0.28;
    const double p = 4.0; // superellipsoid exponent
    const int stacks = 10, slices = 20;
    Mesh& m = obj.mesh;

    auto surface_point = [&](double theta, double phi) {
        Vec3 d{std::cos(theta) * std::sin(phi), std::sin(theta), std::cos(theta) * std::cos(phi)};
        double q = std::pow(std::fabs(d.x / rx), p) + std::pow(std::fabs(d.y / ry), p) +
                   std::pow(std::fabs(d.z / rz), p);
        double r = std::pow(q, -1.0 / p);
        return d * r;
    };
    // planar projection UVs: both sides of the cushion carry the print
    auto planar_uv = [&](const Vec3& v) {
        return uv_at((v.x / rx + 1.0) * 0.5, (v.y / ry + 1.0) * 0.5);
    };

    // rows 1..stacks-1 are rings, plus two pole vertices
    std::vector<std::vector<int>> ring(stacks + 1);
    const double half_pi = std::asin(1.0);
    for (int i = 1; i < stacks; ++i) {
        double theta = -half_pi + (half_pi * 2.0) * i / stacks;
        ring[i].resize(slices);
        for (int j = 0; j < slices; ++j) {
            double phi = 2.0 * half_pi * 2.0 * j / slices;
            ring[i][j] = static_cast<int>(m.vertices.size());
            m.vertices.push_back(surface_point(theta, phi));
        }
    }
    int south = static_cast<int>(m.vertices.size());
    m.vertices.push_back(surface_point(-half_pi, 0.0));
    int north = static_cast<int>(m.vertices.size());
    m.vertices.push_back(surface_point(half_pi, 0.0));

    auto uv_of = [&](int idx) { return planar_uv(m.vertices[idx]); };
    for (int j = 0; j < slices; ++j) {
        int jn = (j + 1) % slices;
        m.tris.push_back({{south, ring[1][jn], ring[1][j]},
                          {uv_of(south), uv_of(ring[1][jn]), uv_of(ring[1][j])}});
        m.tris.push_back({{north, ring[stacks - 1][j], ring[stacks - 1][jn]},
                          {uv_of(north), uv_of(ring[stacks - 1][j]), uv_of(ring[stacks - 1][jn])}});
    }
    for (int i = 1; i + 1 < stacks; ++i) {
        for (int j = 0; j < slices; ++j) {
            int jn = (j + 1) % slices;
            int a = ring[i][j], b = ring[i][jn], c = ring[i + 1][jn], d = ring[i + 1][j];
            push_quad(m, a, b, c, d, uv_of(a), uv_of(b), uv_of(c), uv_of(d));
        }
    }
    return obj;
}

SourceObject make_orb() {
    SourceObject obj;
    obj.name = "orb";
    obj.texture_size = 256;
    obj.bx0 = 1; obj.by0 = 77; obj.bx1 = 255; obj.by1 = 179; // equatorial band

    const double radius = 0.6;
    const int stacks = 16, slices = 32;
    Mesh& m = obj.mesh;
    const double pi = 2.0 * std::asin(1.0);

    // seam gets a duplicated column so u can run 0..1
    std::vector<std::vector<int>> grid(stacks + 1, std::vector<int>(slices + 1, -1));
    for (int i = 1; i < stacks; ++i) {
        double theta = -pi / 2.0 + pi * i / stacks;
        for (int j = 0; j <= slices; ++j) {
            double phi = 2.0 * pi * j / slices;
            grid[i][j] = static_cast<int>(m.vertices.size());
            m.vertices.push_back(Vec3{std::cos(theta) * std::sin(phi), std::sin(theta),
                                      std::cos(theta) * std::cos(phi)} *
                                 radius);
        }
    }
    int south = static_cast<int>(m.vertices.size());
    m.vertices.push_back({0, -radius, 0});
    int north = static_cast<int>(m.vertices.size());
    m.vertices.push_back({0, radius, 0});

    auto sphere_uv = [&](int i, int j) {
        return uv_at(static_cast<double>(j) / slices, static_cast<double>(i) / stacks);
    };
    for (int j = 0; j < slices; ++j) {
        Vec2 mid_s = uv_at((j + 0.5) / slices, 0.0);
        Vec2 mid_n = uv_at((j + 0.5) / slices, 1.0);
        m.tris.push_back({{south, grid[1][j + 1], grid[1][j]},
                          {mid_s, sphere_uv(1, j + 1), sphere_uv(1, j)}});
        m.tris.push_back({{north, grid[stacks - 1][j], grid[stacks - 1][j + 1]},
                          {mid_n, sphere_uv(stacks - 1, j), sphere_uv(stacks - 1, j + 1)}});
    }
    for (int i = 1; i + 1 < stacks; ++i) {
        for (int j = 0; j < slices; ++j) {
            int a = grid[i][j], b = grid[i][j + 1], c = grid[i + 1][j + 1], d = grid[i + 1][j];
            push_quad(m, a, b, c, d, sphere_uv(i, j), sphere_uv(i, j + 1), sphere_uv(i + 1, j + 1),
                      sphere_uv(i + 1, j));
        }
    }
    return obj;
}

} // namespace

ObjectPool builtin_objects() {
    ObjectPool pool;
    pool.objects = {make_slab(), make_cushion(), make_orb()};
    pool.validate();
    return pool;
}

SceneSample sample_scene(Rng& rng, const SceneConfig& config, const ObjectPool& pool) {
    config.validate();
    SceneSample s;
    s.object_index = rng.uniform_int(static_cast<int>(pool.objects.size()));
    for (int c = 0; c < 3; ++c) s.fill_color[c] = rng.uniform(config.texture_color.lo, config.texture_color.hi);
    s.elevation = rng.uniform(config.angle.lo, config.angle.hi);
    s.azimuth = rng.uniform(config.angle.lo, config.angle.hi);
    s.tilt = rng.uniform(config.angle.lo, config.angle.hi);
    s.distance_mul = rng.uniform(config.distance.lo, config.distance.hi);
    s.ambient = rng.uniform(config.ambient.lo, config.ambient.hi);
    s.diffuse = rng.uniform(config.diffuse.lo, config.diffuse.hi);
    s.light_pos = {config.default_light_pos.x + rng.uniform(config.light_translation.lo, config.light_translation.hi),
                   config.default_light_pos.y + rng.uniform(config.light_translation.lo, config.light_translation.hi),
                   config.default_light_pos.z + rng.uniform(config.light_translation.lo, config.light_translation.hi)};
    s.background_seed = rng.next_u64();
    return s;
}

std::pair<Image, CanvasRecord> prepare_texture(const SourceObject& obj, const SceneSample& sample,
                                               const Image& x) {
    if (x.width < 1 || x.height < 1) throw std::invalid_argument("prepare_texture: empty input image");
    CanvasRecord rec;
    rec.tex_size = obj.texture_size;
    rec.bx0 = obj.bx0; rec.by0 = obj.by0; rec.bx1 = obj.bx1; rec.by1 = obj.by1;
    rec.in_w = x.width;
    rec.in_h = x.height;
    rec.fill = sample.fill_color;
    return {canvas_replay(rec, x), rec};
}

Image canvas_replay(const CanvasRecord& rec, const Image& x) {
    Image tex = Image::filled(rec.tex_size, rec.tex_size, rec.fill[0], rec.fill[1], rec.fill[2]);
    Image patch = bilinear_resize(x, rec.bx1 - rec.bx0, rec.by1 - rec.by0);
    for (int y = 0; y < patch.height; ++y)
        for (int xx = 0; xx < patch.width; ++xx)
            for (int c = 0; c < 3; ++c)
                tex.at(rec.bx0 + xx, rec.by0 + y, c) = patch.at(xx, y, c);
    return tex;
}

GradientField canvas_adjoint(const CanvasRecord& rec, const GradientField& grad_texture) {
    if (grad_texture.width != rec.tex_size || grad_texture.height != rec.tex_size)
        throw std::invalid_argument("canvas_adjoint: gradient shape mismatch");
    GradientField patch(rec.bx1 - rec.bx0, rec.by1 - rec.by0);
    for (int y = 0; y < patch.height; ++y)
        for (int xx = 0; xx < patch.width; ++xx)
            for (int c = 0; c < 3; ++c)
                patch.at(xx, y, c) = grad_texture.at(rec.bx0 + xx, rec.by0 + y, c);
    return bilinear_resize_adjoint(patch, rec.in_w, rec.in_h);
}

Image make_background(BackgroundMode mode, Rng& rng, const Image& x, int resolution) {
    switch (mode) {
        case BackgroundMode::black:
            return Image(resolution, resolution);
        case BackgroundMode::random_solid: {
            double r = rng.uniform(), g = rng.uniform(), b = rng.uniform();
            return Image::filled(resolution, resolution, r, g, b);
        }
        case BackgroundMode::random_pixel: {
            Image bg(resolution, resolution);
            for (double& v : bg.data) v = rng.uniform();
            return bg;
        }
        case BackgroundMode::blurred_input: {
            Image resized = bilinear_resize(x, resolution, resolution);
            return gaussian_blur_image(resized, kBackgroundBlurSize, kBackgroundBlurSigma);
        }
    }
    throw std::logic_error("make_background: bad mode");
}

Mesh layout_instances(const Mesh& mesh, int count) {
    if (count < 1) throw std::invalid_argument("layout_instances: count must be >= 1");
    if (count == 1) return mesh;
    double r0 = mesh.bounding_radius();
    double s = 1.0 / (1.0 + 0.9 * (count - 1));
    Mesh out;
    out.vertices.reserve(mesh.vertices.size() * count);
    out.tris.reserve(mesh.tris.size() * count);
    for (int i = 0; i < count; ++i) {
        double t = i - (count - 1) / 2.0;
        Vec3 offset{1.8 * s * r0 * t, 0.0, -0.35 * s * r0 * std::fabs(t)};
        int base = static_cast<int>(out.vertices.size());
        for (const Vec3& v : mesh.vertices) out.vertices.push_back(v * s + offset);
        for (const Mesh::Tri& tri : mesh.tris) {
            Mesh::Tri copy = tri;
            for (int k = 0; k < 3; ++k) copy.v[k] += base;
            out.tris.push_back(copy);
        }
    }
    return out;
}

} // namespace odi
