#ifndef ODI_RENDERER_HPP
#define ODI_RENDERER_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "odi/image.hpp"
#include "odi/mesh.hpp"
#include "odi/scene.hpp"

namespace odi {

// Orbit camera: positioned on the sphere around the origin at (elevation,
// azimuth), looking at the origin, rolled by tilt about the view axis.
struct Camera {
    double elevation = 0; // degrees
    double azimuth = 0;
    double tilt = 0;
    double distance = 3.0; // world units
    double fov_y = 45.0;   // degrees
    int resolution = 64;   // square output

    void validate() const;
};

struct PointLight {
    Vec3 position{0, 0, 4};
    double ambient = 0.7;
    double diffuse = 0.3;
    double specular_strength = 1.0;
    double shininess = 0.5;
};

// Projected vertex: screen coordinates in pixels plus view-space depth.
struct ProjectedVertex {
    double sx = 0, sy = 0;
    double depth = 0; // > 0 in front of the camera
};

// Shared by the rasterizer and by test oracles so coverage comparisons see
// identical screen coordinates.
std::vector<ProjectedVertex> project_vertices(const Mesh& mesh, const Camera& cam);

// Affine dependence of one rendered pixel on the texture: up to four bilinear
// taps whose weights already include the diffuse/ambient shading factor, plus
// a constant (specular, or the clamped value for saturated channels).
struct TexelTap {
    int texel = 0; // row-major texel index
    double w = 0;
};

struct PixelTexels {
    int tap_count = 0;
    TexelTap taps[4];
    Rgb constant{};
    uint8_t active = 0x7; // bit c set => channel c unsaturated, taps apply
};

struct RenderOutput {
    Image image;
    std::vector<uint8_t> coverage;      // resolution^2
    std::vector<PixelTexels> texel_map; // resolution^2; empty taps where uncovered

    bool covered(int x, int y) const { return coverage[static_cast<size_t>(y) * image.width + x] != 0; }
};

// Hard z-buffered rasterization with perspective-correct UVs, flat per-face
// normals (flipped toward the camera), Phong point-light shading, bilinear
// texture lookup clamped at edges, final color clamped to [0,1].
RenderOutput render(const Mesh& mesh, const Image& texture, const Camera& cam, const PointLight& light);

// Covered pixels from the render, everything else from the background.
Image blend(const RenderOutput& ro, const Image& background);

// Distance at which the projected mesh spans `target` of the frame half
// extent at the default view (elevation=azimuth=tilt=0).
double fit_distance(const Mesh& mesh, double fov_y_deg, double target);

inline constexpr double kFovY = 45.0;
inline constexpr double kFrameCoverage = 0.85;

// Replayable affine map of one full ODI pass: input image -> texture ->
// rendered pixels -> blend with background.
struct OdiRecord {
    CanvasRecord canvas;
    int resolution = 0;
    std::vector<uint8_t> coverage;
    std::vector<PixelTexels> texel_map;
    Image background;                    // realized background
    bool bg_from_input = false;          // blurred_input background
    std::vector<uint8_t> bg_active;      // per-pixel channel bits, only when bg_from_input
};

std::pair<Image, OdiRecord> odi_forward(const Image& x, const SceneSample& sample,
                                        const ObjectPool& pool, const SceneConfig& config);

// Applies the recorded affine map to an arbitrary input.
Image odi_replay(const OdiRecord& rec, const Image& x);

// Exact adjoint of the recorded map.
GradientField odi_backward(const OdiRecord& rec, const GradientField& grad_out);

} // namespace odi

#endif
