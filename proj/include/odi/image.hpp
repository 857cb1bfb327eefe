#ifndef ODI_IMAGE_HPP
#define ODI_IMAGE_HPP

#include <cstddef>
#include <vector>

namespace odi {

// RGB raster, row-major, 3 doubles per pixel. Values are kept in [0,1] for
// every user-facing image; intermediate attack probes may step outside and
// are clamped again at the points the algorithms prescribe.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> data; // height*width*3

    Image() = default;
    Image(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h * 3, 0.0) {}

    static Image filled(int w, int h, double r, double g, double b);

    double& at(int x, int y, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    double at(int x, int y, int c) const { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }

    size_t size() const { return data.size(); }
    bool same_shape(const Image& o) const { return width == o.width && height == o.height; }
};

// Same layout as Image, unconstrained values.
struct GradientField {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    GradientField() = default;
    GradientField(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h * 3, 0.0) {}

    double& at(int x, int y, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    double at(int x, int y, int c) const { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }

    size_t size() const { return data.size(); }
};

// Square convolution kernel; weights sum to 1, all non-negative.
struct Kernel {
    int size = 1;
    std::vector<double> weights; // size*size, row-major

    double at(int x, int y) const { return weights[static_cast<size_t>(y) * size + x]; }
};

// One output sample of a bilinear resize: up to two taps per axis.
// Describes the fixed sparse structure so forward and adjoint agree exactly.
struct BilinearTaps {
    int i0, i1;    // source indices (edge-clamped)
    double w0, w1; // weights, w0 + w1 == 1
};

// Half-pixel-center ("align corners false") sampling positions.
BilinearTaps bilinear_taps(int out_index, int in_size, int out_size);

Image bilinear_resize(const Image& img, int out_w, int out_h);

// Adjoint of bilinear_resize with the given input size: scatters grad_out
// back through the same taps.
GradientField bilinear_resize_adjoint(const GradientField& grad_out, int in_w, int in_h);

// Normalized Gaussian, odd size only.
Kernel gaussian_kernel(int size, double sigma);

// Internal generalization used by gaussian_blur_image: even sizes place
// sample offsets at half-integers around the kernel center.
Kernel gaussian_kernel_any(int size, double sigma);

// Per-channel 2D correlation, zero padding, output shape preserved.
GradientField conv2d_same(const GradientField& g, const Kernel& k);
Image conv2d_same(const Image& img, const Kernel& k);

// Adjoint of conv2d_same: correlation with the 180-degree-flipped kernel.
GradientField conv2d_same_adjoint(const GradientField& g, const Kernel& k);

// Blur then clamp to [0,1]. Accepts even kernel sizes (the blurred-background
// setting uses size 50).
Image gaussian_blur_image(const Image& img, int size, double sigma);

// min(max(x_adv, x_orig-eps, 0), x_orig+eps, 1) per component.
Image clip_linf(const Image& x_adv, const Image& x_orig, double eps);

double l1_norm(const GradientField& g);
GradientField l1_normalize(const GradientField& g); // throws on all-zero input
GradientField sign_field(const GradientField& g);   // sign(+-0) == 0

} // namespace odi

#endif
