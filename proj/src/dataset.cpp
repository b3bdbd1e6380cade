#include "stag/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "stag/error.hpp"

namespace stag {

namespace {

constexpr double kTau = 6.283185307179586;

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;
};

Vec3 sample_sphere(RngStream& rng, double r) {
    // Direction from normalized Gaussians; every point sits at radius r.
    double x, y, z, n2;
    do {
        x = rng.normal();
        y = rng.normal();
        z = rng.normal();
        n2 = x * x + y * y + z * z;
    } while (n2 < 1e-12);
    const double s = r / std::sqrt(n2);
    return {x * s, y * s, z * s};
}

Vec3 sample_cube(RngStream& rng, double a, double b, double c) {
    // Face chosen by surface area, then uniform on that face.
    const double areas[3] = {b * c, a * c, a * b};  // x, y, z face pairs
    const double total = 2.0 * (areas[0] + areas[1] + areas[2]);
    double t = rng.uniform(0.0, total);
    int axis = 0;
    for (; axis < 2; ++axis) {
        if (t < 2.0 * areas[axis]) break;
        t -= 2.0 * areas[axis];
    }
    const double sign = t < areas[axis] ? 1.0 : -1.0;
    const double u = rng.uniform(-1.0, 1.0);
    const double v = rng.uniform(-1.0, 1.0);
    switch (axis) {
        case 0: return {sign * a, u * b, v * c};
        case 1: return {u * a, sign * b, v * c};
        default: return {u * a, v * b, sign * c};
    }
}

Vec3 sample_cylinder(RngStream& rng, double r, double h) {
    const double side = kTau * r * (2.0 * h);
    const double cap = kTau / 2.0 * r * r;
    double t = rng.uniform(0.0, side + 2.0 * cap);
    if (t < side) {
        const double ang = rng.uniform(0.0, kTau);
        return {r * std::cos(ang), r * std::sin(ang), rng.uniform(-h, h)};
    }
    const double sign = t < side + cap ? 1.0 : -1.0;
    const double rad = r * std::sqrt(rng.uniform());
    const double ang = rng.uniform(0.0, kTau);
    return {rad * std::cos(ang), rad * std::sin(ang), sign * h};
}

Vec3 sample_torus(RngStream& rng, double R, double r) {
    // Tube angle re-weighted by the surface element (R + r cos v).
    double v;
    do {
        v = rng.uniform(0.0, kTau);
    } while (rng.uniform() * (R + r) > R + r * std::cos(v));
    const double u = rng.uniform(0.0, kTau);
    const double w = R + r * std::cos(v);
    return {w * std::cos(u), w * std::sin(u), r * std::sin(v)};
}

void rotate_uniform(RngStream& rng, std::vector<Vec3>& pts) {
    const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
    const double qx = std::sqrt(1.0 - u1) * std::sin(kTau * u2);
    const double qy = std::sqrt(1.0 - u1) * std::cos(kTau * u2);
    const double qz = std::sqrt(u1) * std::sin(kTau * u3);
    const double qw = std::sqrt(u1) * std::cos(kTau * u3);
    const double m[3][3] = {
        {1 - 2 * (qy * qy + qz * qz), 2 * (qx * qy - qz * qw), 2 * (qx * qz + qy * qw)},
        {2 * (qx * qy + qz * qw), 1 - 2 * (qx * qx + qz * qz), 2 * (qy * qz - qx * qw)},
        {2 * (qx * qz - qy * qw), 2 * (qy * qz + qx * qw), 1 - 2 * (qx * qx + qy * qy)}};
    for (Vec3& p : pts) {
        const Vec3 q = p;
        p.x = m[0][0] * q.x + m[0][1] * q.y + m[0][2] * q.z;
        p.y = m[1][0] * q.x + m[1][1] * q.y + m[1][2] * q.z;
        p.z = m[2][0] * q.x + m[2][1] * q.y + m[2][2] * q.z;
    }
}

std::vector<Vec3> sample_class(const std::string& cls, RngStream& rng, int points,
                               double noise_sigma) {
    std::vector<Vec3> pts(static_cast<std::size_t>(points));
    if (cls == "sphere") {
        const double r = rng.uniform(0.8, 1.2);
        for (Vec3& p : pts) p = sample_sphere(rng, r);
    } else if (cls == "cube") {
        const double a = rng.uniform(0.7, 1.3), b = rng.uniform(0.7, 1.3),
                     c = rng.uniform(0.7, 1.3);
        for (Vec3& p : pts) p = sample_cube(rng, a, b, c);
    } else if (cls == "cylinder") {
        const double r = rng.uniform(0.5, 0.9), h = rng.uniform(0.8, 1.4);
        for (Vec3& p : pts) p = sample_cylinder(rng, r, h);
    } else if (cls == "torus") {
        const double R = rng.uniform(0.8, 1.2), r = rng.uniform(0.25, 0.4);
        for (Vec3& p : pts) p = sample_torus(rng, R, r);
    } else {
        throw ConfigError("generate_synthetic: unknown class " + cls);
    }
    rotate_uniform(rng, pts);
    if (noise_sigma > 0.0)
        for (Vec3& p : pts) {
            p.x += noise_sigma * rng.normal();
            p.y += noise_sigma * rng.normal();
            p.z += noise_sigma * rng.normal();
        }
    return pts;
}

}  // namespace

void generate_synthetic(const std::string& out_dir, const std::vector<std::string>& classes,
                        int per_class, int points, double noise_sigma, RngStream rng) {
    if (per_class < 1) throw ConfigError("generate_synthetic: per_class must be >= 1");
    if (points < 64) throw ConfigError("generate_synthetic: need at least 64 points");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + out_dir + ": " + ec.message());
    std::ofstream manifest(out_dir + "/manifest.tsv", std::ios::binary);
    if (!manifest) throw IoError("cannot write manifest in " + out_dir);
    char line[80];
    for (const std::string& cls : classes) {
        for (int i = 0; i < per_class; ++i) {
            RngStream srng = rng.derive(cls + "/" + std::to_string(i));
            const std::vector<Vec3> pts = sample_class(cls, srng, points, noise_sigma);
            std::snprintf(line, sizeof line, "%s_%04d.xyz", cls.c_str(), i);
            const std::string rel = line;
            std::ofstream os(out_dir + "/" + rel, std::ios::binary);
            if (!os) throw IoError("cannot write " + out_dir + "/" + rel);
            for (const Vec3& p : pts) {
                std::snprintf(line, sizeof line, "%.6f %.6f %.6f\n", p.x, p.y, p.z);
                os << line;
            }
            if (!os) throw IoError("write failed: " + out_dir + "/" + rel);
            manifest << rel << '\t' << cls << '\n';
        }
    }
    if (!manifest) throw IoError("manifest write failed in " + out_dir);
}

Dataset load_dataset(const std::string& manifest_path) {
    std::ifstream mf(manifest_path);
    if (!mf) throw IoError("cannot open manifest: " + manifest_path);
    const std::string root = std::filesystem::path(manifest_path).parent_path().string();
    std::vector<std::pair<std::string, std::string>> entries;
    std::string line;
    int lineno = 0;
    while (std::getline(mf, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size())
            throw ParseError(manifest_path + ":" + std::to_string(lineno) +
                             ": expected relative_path<TAB>label_name");
        entries.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    if (entries.empty()) throw DataError("manifest lists no clouds: " + manifest_path);

    Dataset ds;
    for (const auto& [rel, label] : entries) ds.label_names.push_back(label);
    std::sort(ds.label_names.begin(), ds.label_names.end());
    ds.label_names.erase(std::unique(ds.label_names.begin(), ds.label_names.end()),
                         ds.label_names.end());
    std::map<std::string, int> label_index;
    for (std::size_t i = 0; i < ds.label_names.size(); ++i)
        label_index[ds.label_names[i]] = static_cast<int>(i);

    for (const auto& [rel, label] : entries) {
        const std::string path = root.empty() ? rel : root + "/" + rel;
        std::ifstream is(path);
        if (!is) throw IoError("cloud file missing: " + path);
        std::vector<double> vals;
        std::string cloud_line;
        int cl = 0;
        while (std::getline(is, cloud_line)) {
            ++cl;
            if (cloud_line.empty()) continue;
            std::istringstream ss(cloud_line);
            double x, y, z;
            std::string extra;
            if (!(ss >> x >> y >> z) || (ss >> extra))
                throw ParseError(path + ":" + std::to_string(cl) +
                                 ": expected exactly three numeric fields");
            vals.push_back(x);
            vals.push_back(y);
            vals.push_back(z);
        }
        PointCloud cloud;
        cloud.points = Matrix(static_cast<int>(vals.size() / 3), 3);
        for (std::size_t i = 0; i < vals.size(); ++i)
            cloud.points.data()[i] = vals[i];
        cloud.label = label_index.at(label);
        cloud.source_id = rel;
        try {
            ds.clouds.push_back(normalize_cloud(cloud));
        } catch (const DataError& e) {
            throw DataError(std::string(e.what()) + " (file " + path + ")");
        }
    }
    return ds;
}

}  // namespace stag
