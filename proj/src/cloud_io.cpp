#include "x3d/cloud_io.hpp"

#include "x3d/binary.hpp"
#include "x3d/error.hpp"

#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace x3d::io {

namespace {

struct PlyElement {
  std::string name;
  Index count = 0;
  std::vector<std::string> properties;  // scalar properties only
  bool has_list = false;
};

}  // namespace

PointCloud parse_ply(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("ply", 0) != 0) throw FormatError("missing 'ply' magic");

  std::vector<PlyElement> elements;
  bool ascii = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      ascii = fmt == "ascii";
    } else if (word == "element") {
      PlyElement e;
      ls >> e.name >> e.count;
      elements.push_back(std::move(e));
    } else if (word == "property") {
      if (elements.empty()) throw FormatError("property before any element");
      std::string type;
      ls >> type;
      if (type == "list") {
        elements.back().has_list = true;
      } else {
        std::string name;
        ls >> name;
        elements.back().properties.push_back(name);
      }
    } else if (word == "end_header") {
      break;
    }
  }
  if (!ascii) throw FormatError("only ASCII PLY is supported");

  PointCloud cloud;
  bool have_vertices = false;
  for (const PlyElement& e : elements) {
    if (e.name != "vertex") {
      for (Index r = 0; r < e.count; ++r) std::getline(in >> std::ws, line);
      continue;
    }
    if (e.has_list) throw FormatError("list properties on vertex are not supported");
    int ix = -1, iy = -1, iz = -1;
    std::vector<int> extra;
    for (int p = 0; p < static_cast<int>(e.properties.size()); ++p) {
      const std::string& nm = e.properties[p];
      if (nm == "x") ix = p;
      else if (nm == "y") iy = p;
      else if (nm == "z") iz = p;
      else extra.push_back(p);
    }
    if (ix < 0 || iy < 0 || iz < 0) throw FormatError("vertex element lacks x/y/z");
    cloud.coords.resize(e.count, 3);
    Matrix feats(e.count, static_cast<Index>(extra.size()));
    std::vector<double> vals(e.properties.size());
    for (Index r = 0; r < e.count; ++r) {
      for (double& v : vals) {
        if (!(in >> v)) throw FormatError("truncated vertex data");
      }
      cloud.coords(r, 0) = vals[ix];
      cloud.coords(r, 1) = vals[iy];
      cloud.coords(r, 2) = vals[iz];
      for (std::size_t f = 0; f < extra.size(); ++f) feats(r, static_cast<Index>(f)) = vals[extra[f]];
    }
    if (!extra.empty()) cloud.features = std::move(feats);
    have_vertices = true;
  }
  if (!have_vertices) throw FormatError("no vertex element");
  cloud.validate();
  return cloud;
}

PointCloud read_ply(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return parse_ply(in);
}

void write_ply(const std::filesystem::path& path, const PointCloud& cloud) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  for (Index c = 0; c < cloud.feature_dim(); ++c) out << "property double f" << c << "\n";
  out << "end_header\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Index r = 0; r < cloud.size(); ++r) {
    out << cloud.coords(r, 0) << ' ' << cloud.coords(r, 1) << ' ' << cloud.coords(r, 2);
    for (Index c = 0; c < cloud.feature_dim(); ++c) out << ' ' << (*cloud.features)(r, c);
    out << '\n';
  }
}

void encode_x3pc(std::ostream& out, const PointCloud& cloud) {
  using detail::put;
  out.write("X3PC", 4);
  const Index n = cloud.size();
  const Index c = cloud.feature_dim();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(n));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c));
  for (Index r = 0; r < n; ++r)
    for (int d = 0; d < 3; ++d) put<double>(out, cloud.coords(r, d));
  for (Index r = 0; r < n; ++r)
    for (Index f = 0; f < c; ++f) put<double>(out, (*cloud.features)(r, f));
  if (cloud.labels) {
    for (int v : *cloud.labels) put<std::int32_t>(out, v);
  }
}

PointCloud decode_x3pc(std::istream& in) {
  using detail::get;
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "X3PC") throw FormatError("bad X3PC magic");
  const auto n = static_cast<Index>(get<std::uint32_t>(in));
  const auto c = static_cast<Index>(get<std::uint32_t>(in));
  PointCloud cloud;
  cloud.coords.resize(n, 3);
  for (Index r = 0; r < n; ++r)
    for (int d = 0; d < 3; ++d) cloud.coords(r, d) = get<double>(in);
  if (c > 0) {
    Matrix feats(n, c);
    for (Index r = 0; r < n; ++r)
      for (Index f = 0; f < c; ++f) feats(r, f) = get<double>(in);
    cloud.features = std::move(feats);
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int& v : labels) v = get<std::int32_t>(in);
    cloud.labels = std::move(labels);
    if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after X3PC labels");
  }
  cloud.validate();
  return cloud;
}

PointCloud read_x3pc(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return decode_x3pc(in);
}

void write_x3pc(const std::filesystem::path& path, const PointCloud& cloud) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  encode_x3pc(out, cloud);
}

}  // namespace x3d::io
