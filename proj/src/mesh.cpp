#include "odi/mesh.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace odi {

void Mesh::validate() const {
    int n = static_cast<int>(vertices.size());
    for (size_t t = 0; t < tris.size(); ++t) {
        const Tri& tri = tris[t];
        for (int k = 0; k < 3; ++k) {
            if (tri.v[k] < 0 || tri.v[k] >= n)
                throw std::runtime_error("mesh: vertex index out of range in face " + std::to_string(t));
            if (tri.uv[k].u < 0.0 || tri.uv[k].u > 1.0 || tri.uv[k].v < 0.0 || tri.uv[k].v > 1.0)
                throw std::runtime_error("mesh: uv outside [0,1] in face " + std::to_string(t));
        }
        Vec3 e1 = vertices[tri.v[1]] - vertices[tri.v[0]];
        Vec3 e2 = vertices[tri.v[2]] - vertices[tri.v[0]];
        if (e1.cross(e2).norm() <= 1e-12)
            throw std::runtime_error("mesh: zero-area face " + std::to_string(t));
    }
}

double Mesh::bounding_radius() const {
    double r = 0.0;
    for (const Vec3& v : vertices) r = std::max(r, v.norm());
    return r;
}

Mesh load_obj(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_obj: cannot open " + path);

    Mesh mesh;
    std::vector<Vec2> uvs;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ss(line);
        std::string tag;
        if (!(ss >> tag) || tag[0] == '#') continue;
        if (tag == "v") {
            Vec3 p;
            if (!(ss >> p.x >> p.y >> p.z))
                throw std::runtime_error("load_obj: bad vertex at line " + std::to_string(lineno));
            mesh.vertices.push_back(p);
        } else if (tag == "vt") {
            Vec2 t;
            if (!(ss >> t.u >> t.v))
                throw std::runtime_error("load_obj: bad texcoord at line " + std::to_string(lineno));
            uvs.push_back(t);
        } else if (tag == "f") {
            std::vector<std::pair<int, int>> corners; // (vertex, uv), 0-based
            std::string tok;
            while (ss >> tok) {
                size_t slash = tok.find('/');
                if (slash == std::string::npos)
                    throw std::runtime_error("load_obj: face without uv index at line " + std::to_string(lineno));
                int vi = std::stoi(tok.substr(0, slash));
                std::string rest = tok.substr(slash + 1);
                size_t slash2 = rest.find('/');
                int ti = std::stoi(slash2 == std::string::npos ? rest : rest.substr(0, slash2));
                if (vi < 0) vi = static_cast<int>(mesh.vertices.size()) + vi + 1;
                if (ti < 0) ti = static_cast<int>(uvs.size()) + ti + 1;
                corners.emplace_back(vi - 1, ti - 1);
            }
            if (corners.size() < 3)
                throw std::runtime_error("load_obj: face with <3 corners at line " + std::to_string(lineno));
            for (auto& [vi, ti] : corners)
                if (ti < 0 || ti >= static_cast<int>(uvs.size()))
                    throw std::runtime_error("load_obj: uv index out of range at line " + std::to_string(lineno));
            // fan-triangulate polygons
            for (size_t k = 1; k + 1 < corners.size(); ++k) {
                Mesh::Tri tri;
                tri.v = {corners[0].first, corners[k].first, corners[k + 1].first};
                tri.uv = {uvs[corners[0].second], uvs[corners[k].second], uvs[corners[k + 1].second]};
                mesh.tris.push_back(tri);
            }
        }
        // other tags (vn, o, g, s, usemtl, ...) are ignored
    }
    mesh.validate();
    return mesh;
}

void save_obj(const std::string& path, const Mesh& mesh) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_obj: cannot open " + path);
    out.precision(17);
    for (const Vec3& v : mesh.vertices)
        out << "v " << v.x << " " << v.y << " " << v.z << "\n";

    // deduplicate texcoords to keep the file small
    std::map<std::pair<double, double>, int> uv_index;
    std::vector<Vec2> uvs;
    auto uv_id = [&](const Vec2& t) {
        auto key = std::make_pair(t.u, t.v);
        auto it = uv_index.find(key);
        if (it != uv_index.end()) return it->second;
        int id = static_cast<int>(uvs.size());
        uvs.push_back(t);
        uv_index.emplace(key, id);
        return id;
    };
    std::vector<std::array<int, 6>> faces;
    faces.reserve(mesh.tris.size());
    for (const Mesh::Tri& t : mesh.tris)
        faces.push_back({t.v[0], uv_id(t.uv[0]), t.v[1], uv_id(t.uv[1]), t.v[2], uv_id(t.uv[2])});
    for (const Vec2& t : uvs)
        out << "vt " << t.u << " " << t.v << "\n";
    for (const auto& f : faces)
        out << "f " << f[0] + 1 << "/" << f[1] + 1 << " " << f[2] + 1 << "/" << f[3] + 1
            << " " << f[4] + 1 << "/" << f[5] + 1 << "\n";
    if (!out) throw std::runtime_error("save_obj: write failed for " + path);
}

} // namespace odi
