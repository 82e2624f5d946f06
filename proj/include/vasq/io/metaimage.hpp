#pragma once

// MetaImage (.mhd + .raw) volume IO: text header, little-endian raw payload in
// x-fastest order. Round trips are bit-exact for all supported element types;
// unknown header keys survive a rewrite.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "vasq/core.hpp"
#include "vasq/grid.hpp"

namespace vasq {

enum class ElementType { Short, UChar, Float };

inline const char* element_type_name(ElementType t) {
  switch (t) {
    case ElementType::Short: return "MET_SHORT";
    case ElementType::UChar: return "MET_UCHAR";
    case ElementType::Float: return "MET_FLOAT";
  }
  return "MET_FLOAT";
}

inline std::size_t element_size(ElementType t) {
  switch (t) {
    case ElementType::Short: return 2;
    case ElementType::UChar: return 1;
    case ElementType::Float: return 4;
  }
  return 4;
}

namespace detail {

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

struct MhdHeader {
  Index3 dims{0, 0, 0};
  std::array<double, 3> spacing{1, 1, 1};
  std::array<double, 3> offset{0, 0, 0};
  ElementType type = ElementType::Float;
  std::string data_file;  // "LOCAL" or a file name relative to the header
  bool has_spacing = false;
  std::vector<std::pair<std::string, std::string>> unknown;  // preserved keys, in order
  std::size_t header_bytes = 0;                              // start of LOCAL payload
};

inline MhdHeader parse_mhd_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw validation_error("cannot open " + path.string());

  MhdHeader h;
  bool have_dims = false, have_type = false;
  std::string line;
  std::size_t consumed = 0;
  while (std::getline(in, line)) {
    consumed += line.size() + 1;  // getline swallowed one '\n'
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      if (trim(line).empty()) continue;
      throw validation_error(path.string() + ": malformed header line '" + trim(line) + "'");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    std::string lkey = lower(key);

    auto parse3d = [&](std::array<double, 3>& out3) {
      std::istringstream vs(value);
      if (!(vs >> out3[0] >> out3[1] >> out3[2]))
        throw validation_error(path.string() + ": cannot parse '" + key + " = " + value + "'");
    };

    if (lkey == "ndims") {
      if (trim(value) != "3")
        throw validation_error(path.string() + ": only NDims = 3 supported, got " + value);
    } else if (lkey == "dimsize") {
      std::istringstream vs(value);
      if (!(vs >> h.dims[0] >> h.dims[1] >> h.dims[2]))
        throw validation_error(path.string() + ": cannot parse DimSize '" + value + "'");
      have_dims = true;
    } else if (lkey == "elementspacing" || lkey == "elementsize") {
      parse3d(h.spacing);
      h.has_spacing = true;
    } else if (lkey == "offset" || lkey == "origin" || lkey == "position") {
      parse3d(h.offset);
    } else if (lkey == "elementtype") {
      std::string v = lower(value);
      if (v == "met_short") h.type = ElementType::Short;
      else if (v == "met_uchar") h.type = ElementType::UChar;
      else if (v == "met_float") h.type = ElementType::Float;
      else
        throw validation_error(path.string() + ": unsupported ElementType '" + value +
                               "' (supported: MET_SHORT, MET_UCHAR, MET_FLOAT)");
      have_type = true;
    } else if (lkey == "elementdatafile") {
      h.data_file = value;
      h.header_bytes = consumed;
      break;  // ElementDataFile terminates the header
    } else if (lkey == "binarydatabyteordermsb" || lkey == "elementbyteordermsb") {
      if (lower(value) == "true")
        throw validation_error(path.string() + ": big-endian data not supported");
    } else if (lkey == "objecttype" || lkey == "binarydata" || lkey == "compresseddata") {
      if (lkey == "compresseddata" && lower(value) == "true")
        throw validation_error(path.string() + ": compressed data not supported");
    } else {
      h.unknown.emplace_back(key, value);
    }
  }
  if (!have_dims) throw validation_error(path.string() + ": missing DimSize");
  if (!have_type) throw validation_error(path.string() + ": missing ElementType");
  if (h.data_file.empty()) throw validation_error(path.string() + ": missing ElementDataFile");
  return h;
}

inline std::vector<char> read_payload(const std::filesystem::path& mhd_path, const MhdHeader& h) {
  const std::size_t expected =
      std::size_t(h.dims[0]) * h.dims[1] * h.dims[2] * element_size(h.type);
  std::filesystem::path data_path;
  std::size_t skip = 0;
  if (lower(h.data_file) == "local") {
    data_path = mhd_path;
    skip = h.header_bytes;
  } else {
    data_path = mhd_path.parent_path() / h.data_file;
  }
  std::ifstream in(data_path, std::ios::binary);
  if (!in) throw validation_error("cannot open raw data file " + data_path.string());
  in.seekg(0, std::ios::end);
  const std::size_t total = std::size_t(in.tellg());
  if (total < skip + expected) {
    std::ostringstream os;
    os << data_path.string() << ": raw data truncated; expected " << expected
       << " bytes for DimSize x ElementType, found " << (total > skip ? total - skip : 0);
    throw validation_error(os.str());
  }
  in.seekg(std::streamoff(skip));
  std::vector<char> bytes(expected);
  in.read(bytes.data(), std::streamsize(expected));
  if (!in) throw validation_error("read failure on " + data_path.string());
  return bytes;
}

template <typename T>
inline void apply_header_meta(Grid<T>& g, const MhdHeader& h) {
  g.spacing = h.has_spacing ? h.spacing : std::array<double, 3>{1, 1, 1};
  g.origin = h.offset;
  if (!h.has_spacing) g.meta["no_spacing"] = "1";
  g.meta["element_type"] = element_type_name(h.type);
  for (const auto& [k, v] : h.unknown) g.meta["mhd:" + k] = v;
}

}  // namespace detail

// Reads any supported volume into a float grid (MET_SHORT / MET_UCHAR values
// convert losslessly). The on-disk element type lands in meta["element_type"].
inline VoxelGrid read_volume(const std::filesystem::path& path) {
  auto h = detail::parse_mhd_header(path);
  auto bytes = detail::read_payload(path, h);
  VoxelGrid g = VoxelGrid::zeros(h.dims);
  detail::apply_header_meta(g, h);
  const std::size_t n = g.size();
  switch (h.type) {
    case ElementType::Float:
      std::memcpy(g.data.data(), bytes.data(), n * 4);
      break;
    case ElementType::Short: {
      std::vector<std::int16_t> tmp(n);
      std::memcpy(tmp.data(), bytes.data(), n * 2);
      for (std::size_t i = 0; i < n; ++i) g.data[i] = float(tmp[i]);
      break;
    }
    case ElementType::UChar:
      for (std::size_t i = 0; i < n; ++i)
        g.data[i] = float(static_cast<unsigned char>(bytes[i]));
      break;
  }
  return g;
}

// Reads a label mask (requires MET_UCHAR with codes in {0,1,2}).
inline LabelMask read_mask(const std::filesystem::path& path) {
  auto h = detail::parse_mhd_header(path);
  if (h.type != ElementType::UChar)
    throw validation_error(path.string() + ": label masks must be MET_UCHAR, got " +
                           element_type_name(h.type));
  auto bytes = detail::read_payload(path, h);
  LabelMask m = LabelMask::zeros(h.dims);
  detail::apply_header_meta(m, h);
  std::memcpy(m.data.data(), bytes.data(), m.size());
  require_labels(m, path.string().c_str());
  return m;
}

namespace detail {

template <typename T>
inline void write_mhd(const std::filesystem::path& path, const Grid<T>& g, ElementType type,
                      const std::vector<char>& payload) {
  if (path.extension() != ".mhd")
    throw validation_error("write_volume: output path must end in .mhd, got " + path.string());
  std::filesystem::path raw_path = path;
  raw_path.replace_extension(".raw");

  std::ofstream hdr(path, std::ios::binary | std::ios::trunc);
  if (!hdr) throw validation_error("cannot write " + path.string());
  hdr << "ObjectType = Image\n"
      << "NDims = 3\n"
      << "BinaryData = True\n"
      << "BinaryDataByteOrderMSB = False\n"
      << "CompressedData = False\n"
      << "DimSize = " << g.dims[0] << " " << g.dims[1] << " " << g.dims[2] << "\n";
  std::ostringstream num;
  num.precision(17);
  num << "ElementSpacing = " << g.spacing[0] << " " << g.spacing[1] << " " << g.spacing[2]
      << "\nOffset = " << g.origin[0] << " " << g.origin[1] << " " << g.origin[2] << "\n";
  hdr << num.str();
  for (const auto& [k, v] : g.meta)
    if (k.rfind("mhd:", 0) == 0) hdr << k.substr(4) << " = " << v << "\n";
  hdr << "ElementType = " << element_type_name(type) << "\n"
      << "ElementDataFile = " << raw_path.filename().string() << "\n";
  if (!hdr) throw validation_error("write failure on " + path.string());
  hdr.close();

  std::ofstream raw(raw_path, std::ios::binary | std::ios::trunc);
  if (!raw) throw validation_error("cannot write " + raw_path.string());
  raw.write(payload.data(), std::streamsize(payload.size()));
  if (!raw) throw validation_error("write failure on " + raw_path.string());
}

}  // namespace detail

// Writes a grid as .mhd + sibling .raw. MET_SHORT requires integral values in
// the int16 range (HU volumes); MET_FLOAT is lossless for any grid.
inline void write_volume(const std::filesystem::path& path, const VoxelGrid& g,
                         ElementType type = ElementType::Float) {
  const std::size_t n = g.size();
  std::vector<char> payload(n * element_size(type));
  switch (type) {
    case ElementType::Float:
      std::memcpy(payload.data(), g.data.data(), n * 4);
      break;
    case ElementType::Short: {
      std::vector<std::int16_t> tmp(n);
      for (std::size_t i = 0; i < n; ++i) {
        float v = g.data[i];
        if (v < -32768.0f || v > 32767.0f || v != std::floor(v)) {
          auto c = g.coords(i);
          std::ostringstream os;
          os << "write_volume: value " << v << " at (" << c[0] << "," << c[1] << "," << c[2]
             << ") not representable as MET_SHORT";
          throw validation_error(os.str());
        }
        tmp[i] = std::int16_t(v);
      }
      std::memcpy(payload.data(), tmp.data(), n * 2);
      break;
    }
    case ElementType::UChar:
      for (std::size_t i = 0; i < n; ++i) {
        float v = g.data[i];
        if (v < 0.0f || v > 255.0f || v != std::floor(v)) {
          auto c = g.coords(i);
          std::ostringstream os;
          os << "write_volume: value " << v << " at (" << c[0] << "," << c[1] << "," << c[2]
             << ") not representable as MET_UCHAR";
          throw validation_error(os.str());
        }
        payload[i] = char(static_cast<unsigned char>(v));
      }
      break;
  }
  detail::write_mhd(path, g, type, payload);
}

inline void write_mask(const std::filesystem::path& path, const LabelMask& m) {
  std::vector<char> payload(m.size());
  std::memcpy(payload.data(), m.data.data(), m.size());
  detail::write_mhd(path, m, ElementType::UChar, payload);
}

}  // namespace vasq
