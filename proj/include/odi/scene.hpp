#ifndef ODI_SCENE_HPP
#define ODI_SCENE_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "odi/image.hpp"
#include "odi/mesh.hpp"
#include "odi/rng.hpp"

namespace odi {

using Rgb = std::array<double, 3>;

// A 3D canvas for adversarial images: mesh + texture atlas + the texel
// rectangle the input image is pasted into.
struct SourceObject {
    std::string name;
    Mesh mesh;
    int texture_size = 256;            // square atlas
    int bx0 = 0, by0 = 0, bx1 = 0, by1 = 0; // canvas rect, half-open texel coords
    double base_scale = 1.0;

    void validate() const;
};

struct ObjectPool {
    std::vector<SourceObject> objects;

    void validate() const; // non-empty, unique names, valid objects
};

// Procedural stand-ins for common household canvases:
//   slab    - thin cuboid, canvas across the whole front face
//   cushion - rounded superellipsoid, canvas on the center of the front
//   orb     - UV sphere, canvas on the equatorial band
ObjectPool builtin_objects();

struct Range {
    double lo = 0.0, hi = 0.0;
};

enum class BackgroundMode { random_pixel, random_solid, blurred_input, black };

BackgroundMode background_mode_from_string(const std::string& s);
std::string to_string(BackgroundMode m);

struct SceneConfig {
    Range texture_color{0.1, 0.7};
    Range angle{-35.0, 35.0};          // degrees; elevation/azimuth/tilt drawn independently
    Range distance{0.8, 1.2};          // multiplier on the fitted base distance
    Range ambient{0.6, 0.9};
    Range diffuse{0.0, 0.5};
    Range light_translation{-2.0, 2.0}; // per axis around default_light_pos
    Vec3 default_light_pos{0.0, 0.0, 4.0};
    double shininess = 0.5;
    double specular_strength = 1.0;
    BackgroundMode background_mode = BackgroundMode::random_pixel;
    int instance_count = 1;
    int render_resolution = 64;

    void validate() const;
};

// One realization of all per-iteration randomness. Lights are gray:
// brightness scalars scale a unit RGB.
struct SceneSample {
    int object_index = 0;
    Rgb fill_color{};
    double elevation = 0, azimuth = 0, tilt = 0; // degrees
    double distance_mul = 1.0;
    double ambient = 0, diffuse = 0;
    Vec3 light_pos{};
    uint64_t background_seed = 0;
};

// Draw order is frozen: object, fill r/g/b, elevation, azimuth, tilt,
// distance, ambient, diffuse, light x/y/z, background seed.
SceneSample sample_scene(Rng& rng, const SceneConfig& config, const ObjectPool& pool);

// The affine map from the input image into the canvas rect of the texture;
// everything outside the rect is the constant fill color.
struct CanvasRecord {
    int tex_size = 0;
    int bx0 = 0, by0 = 0, bx1 = 0, by1 = 0;
    int in_w = 0, in_h = 0;
    Rgb fill{};
};

std::pair<Image, CanvasRecord> prepare_texture(const SourceObject& obj, const SceneSample& sample,
                                               const Image& x);
Image canvas_replay(const CanvasRecord& rec, const Image& x);
GradientField canvas_adjoint(const CanvasRecord& rec, const GradientField& grad_texture);

// Kernel size / sigma of the blurred-background variant.
inline constexpr int kBackgroundBlurSize = 50;
inline constexpr double kBackgroundBlurSigma = 15.0;

Image make_background(BackgroundMode mode, Rng& rng, const Image& x, int resolution);

// k copies on a centered horizontal arc: copy i is scaled by
// s = 1/(1 + 0.9*(k-1)) and shifted by (1.8*s*r0*t, 0, -0.35*s*r0*|t|) with
// t = i-(k-1)/2 and r0 the single-object bounding radius, so the union spans
// the same width as the original object. All copies share one texture.
Mesh layout_instances(const Mesh& mesh, int count);

} // namespace odi

#endif
