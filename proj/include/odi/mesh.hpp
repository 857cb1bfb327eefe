#ifndef ODI_MESH_HPP
#define ODI_MESH_HPP

#include <array>
#include <cmath>
#include <string>
#include <vector>

namespace odi {

struct Vec3 {
    double x = 0, y = 0, z = 0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        double n = norm();
        return n > 0 ? Vec3{x / n, y / n, z / n} : Vec3{0, 0, 0};
    }
};

struct Vec2 {
    double u = 0, v = 0;
};

// Indexed triangle mesh with per-corner UVs in [0,1].
struct Mesh {
    struct Tri {
        std::array<int, 3> v;
        std::array<Vec2, 3> uv;
    };
    std::vector<Vec3> vertices;
    std::vector<Tri> tris;

    // Throws on out-of-range indices, UVs outside [0,1], or zero-area faces.
    void validate() const;
    double bounding_radius() const;
};

// Wavefront OBJ subset: v, vt, and triangular f with v/vt references.
Mesh load_obj(const std::string& path);
void save_obj(const std::string& path, const Mesh& mesh);

} // namespace odi

#endif
