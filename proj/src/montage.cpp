#include "nasr/montage.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "nasr/error.hpp"

#ifndef NASR_DEFAULT_MONTAGE
#define NASR_DEFAULT_MONTAGE "data/montage_28.csv"
#endif

namespace nasr {

std::size_t Montage::index_of(const std::string& label) const {
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == label) return i;
    throw ParameterError("montage has no channel '" + label + "'");
}

Matrix build_adjacency(const Montage& m, double radius) {
    if (!(radius > 0.0)) throw ParameterError("neighbour radius must be positive");
    const std::size_t c = m.size();
    Matrix a(c, c);
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = i + 1; j < c; ++j) {
            const double dx = m.coords(i, 0) - m.coords(j, 0);
            const double dy = m.coords(i, 1) - m.coords(j, 1);
            if (std::hypot(dx, dy) < radius) a(i, j) = a(j, i) = 1.0;
        }
    return a;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_coord(const std::string& s, std::size_t line_no) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v))
        throw ParseError("montage line " + std::to_string(line_no) + ": bad coordinate '" + s + "'");
    return v;
}

}  // namespace

Montage parse_montage(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    std::vector<std::string> labels;
    std::vector<double> xs, ys;
    std::set<std::string> seen;

    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto f = split_csv(line);
        if (!have_header) {
            if (f.size() != 3 || f[0] != "label" || f[1] != "x_m" || f[2] != "y_m")
                throw ParseError("montage line " + std::to_string(line_no) +
                                 ": expected header 'label,x_m,y_m'");
            have_header = true;
            continue;
        }
        if (f.size() != 3)
            throw ParseError("montage line " + std::to_string(line_no) + ": expected 3 fields, got " +
                             std::to_string(f.size()));
        if (f[0].empty()) throw ParseError("montage line " + std::to_string(line_no) + ": empty label");
        if (!seen.insert(f[0]).second)
            throw ParseError("montage line " + std::to_string(line_no) + ": duplicate label '" + f[0] +
                             "'");
        labels.push_back(f[0]);
        xs.push_back(parse_coord(f[1], line_no));
        ys.push_back(parse_coord(f[2], line_no));
    }
    if (!have_header) throw ParseError("montage is empty");
    if (labels.empty()) throw ParseError("montage has a header but no channels");

    Montage m;
    m.labels = std::move(labels);
    m.coords = Matrix(m.labels.size(), 2);
    for (std::size_t i = 0; i < m.labels.size(); ++i) {
        m.coords(i, 0) = xs[i];
        m.coords(i, 1) = ys[i];
    }
    return m;
}

Montage load_montage(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open montage file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_montage(ss.str());
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

std::filesystem::path default_montage_path() {
    if (const char* env = std::getenv("NASR_MONTAGE")) return env;
    return NASR_DEFAULT_MONTAGE;
}

Montage default_montage() { return load_montage(default_montage_path()); }

}  // namespace nasr
