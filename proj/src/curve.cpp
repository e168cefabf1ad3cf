#include "fluoro/curve.hpp"

#include <fstream>
#include <sstream>

namespace fluoro {

double Curve3D::polyline_length() const {
  double len = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) len += (points[i] - points[i - 1]).norm();
  return len;
}

void write_curve_csv(const Curve3D& curve, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "x_m,y_m,z_m\n";
  for (const Vec3& p : curve.points) {
    out << format_double(p.x()) << ',' << format_double(p.y()) << ',' << format_double(p.z())
        << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Curve3D read_curve_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty curve file: " + path.string());
  // Tolerate a trailing \r from files written on other systems.
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "x_m,y_m,z_m") throw ParseError("bad curve header in " + path.string());

  Curve3D curve;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    Vec3 p;
    char comma1 = 0, comma2 = 0;
    if (!(ss >> p.x() >> comma1 >> p.y() >> comma2 >> p.z()) || comma1 != ',' || comma2 != ',') {
      throw ParseError("bad curve row '" + line + "' in " + path.string());
    }
    curve.points.push_back(p);
  }
  return curve;
}

}  // namespace fluoro
