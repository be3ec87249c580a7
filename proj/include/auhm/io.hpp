#pragma once

// On-disk formats:
//   images      binary PPM (P6, maxval 255); heatmap dumps as PGM (P5)
//   landmarks   text: "66", then one "x y" line per point, 6 decimals
//   labels      CSV with header "file,AU6,AU10,..." and one row per sample
//   checkpoint  "AUHM1\n", key=value header, blank line, then records
//               [u32 name length][name][u32 rank][u32 extents...][f32 values]
//   heatmaps    "AUHS1\n", key=value header, blank line, then f64 values
// All binary numbers are little-endian.

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "auhm/codec.hpp"
#include "auhm/errors.hpp"
#include "auhm/image.hpp"
#include "auhm/model.hpp"
#include "auhm/registration.hpp"

namespace auhm::io {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

/// Sequential reader over a byte buffer that reports failures by offset.
class Cursor {
 public:
  Cursor(std::string_view bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ >= bytes_.size(); }
  std::string_view rest() const { return bytes_.substr(pos_); }

  [[noreturn]] void fail(const std::string& msg) const {
    throw FormatError(what_ + ": " + msg + " at byte " + std::to_string(pos_));
  }

  void expect(std::string_view literal) {
    if (bytes_.substr(pos_, literal.size()) != literal) fail("expected '" + escape(literal) + "'");
    pos_ += literal.size();
  }

  /// Skips whitespace and '#' comments as in the netpbm header grammar.
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t read_uint_token() {
    skip_space_and_comments();
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(bytes_.data() + pos_, bytes_.data() + bytes_.size(), v);
    if (ec != std::errc()) fail("expected unsigned integer");
    pos_ = static_cast<std::size_t>(ptr - bytes_.data());
    return v;
  }

  double read_double_token() {
    while (pos_ < bytes_.size() && (bytes_[pos_] == ' ' || bytes_[pos_] == '\t')) ++pos_;
    double v = 0;
    auto [ptr, ec] = std::from_chars(bytes_.data() + pos_, bytes_.data() + bytes_.size(), v);
    if (ec != std::errc()) fail("expected number");
    pos_ = static_cast<std::size_t>(ptr - bytes_.data());
    return v;
  }

  std::string_view read_line() {
    if (at_end()) fail("unexpected end of input");
    const auto nl = bytes_.find('\n', pos_);
    const auto end = nl == std::string_view::npos ? bytes_.size() : nl;
    std::string_view line = bytes_.substr(pos_, end - pos_);
    pos_ = nl == std::string_view::npos ? bytes_.size() : nl + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return line;
  }

  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) {
      fail("truncated: need " + std::to_string(n) + " bytes, have " +
           std::to_string(bytes_.size() - pos_));
    }
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::uint32_t read_u32() {
    const auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(b[static_cast<std::size_t>(i)]);
    return v;
  }

 private:
  static std::string escape(std::string_view s) {
    std::string out;
    for (char c : s) out += c == '\n' ? std::string("\\n") : std::string(1, c);
    return out;
  }

  std::string_view bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename F>
void put_float_le(std::string& out, F value) {
  using U = std::conditional_t<sizeof(F) == 4, std::uint32_t, std::uint64_t>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

template <typename F>
F get_float_le(std::string_view bytes) {
  using U = std::conditional_t<sizeof(F) == 4, std::uint32_t, std::uint64_t>;
  U bits = 0;
  for (std::size_t i = sizeof(U); i-- > 0;) bits = (bits << 8) | static_cast<std::uint8_t>(bytes[i]);
  return std::bit_cast<F>(bits);
}

inline std::string shortest(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

}  // namespace detail

// --- netpbm -----------------------------------------------------------------

inline std::string encode_ppm(const Rgb8Image& img) {
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.data.data()), img.data.size());
  return out;
}

inline Rgb8Image decode_ppm(std::string_view bytes, const std::string& what = "ppm") {
  Cursor cur(bytes, what);
  cur.expect("P6");
  const std::size_t w = cur.read_uint_token();
  const std::size_t h = cur.read_uint_token();
  const std::size_t maxval = cur.read_uint_token();
  if (maxval != 255) cur.fail("only maxval 255 is supported");
  if (w == 0 || h == 0) cur.fail("zero image extent");
  if (cur.at_end() || !std::isspace(static_cast<unsigned char>(cur.rest()[0]))) {
    cur.fail("expected single whitespace after header");
  }
  cur.take(1);
  const auto payload = cur.take(3 * w * h);
  Rgb8Image img{w, h, std::vector<std::uint8_t>(payload.begin(), payload.end())};
  return img;
}

inline void write_ppm(const std::filesystem::path& path, const Rgb8Image& img) {
  write_file(path, encode_ppm(img));
}

inline Rgb8Image read_ppm(const std::filesystem::path& path) {
  return decode_ppm(read_file(path), path.string());
}

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> data;
  bool operator==(const GrayImage&) const = default;
};

inline std::string encode_pgm(const GrayImage& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.data.data()), img.data.size());
  return out;
}

inline GrayImage decode_pgm(std::string_view bytes, const std::string& what = "pgm") {
  Cursor cur(bytes, what);
  cur.expect("P5");
  const std::size_t w = cur.read_uint_token();
  const std::size_t h = cur.read_uint_token();
  if (cur.read_uint_token() != 255) cur.fail("only maxval 255 is supported");
  if (w == 0 || h == 0) cur.fail("zero image extent");
  cur.take(1);
  const auto payload = cur.take(w * h);
  return {w, h, std::vector<std::uint8_t>(payload.begin(), payload.end())};
}

/// One heatmap channel as grayscale, intensities 0..5 mapped to 0..255.
inline GrayImage heatmap_to_gray(const HeatmapStack& stack, std::size_t channel) {
  GrayImage g{stack.size, stack.size, std::vector<std::uint8_t>(stack.size * stack.size)};
  const auto ch = stack.channel(channel);
  for (std::size_t i = 0; i < ch.size(); ++i) {
    const double v = std::clamp(ch[i], 0.0, kMaxIntensity) / kMaxIntensity;
    g.data[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return g;
}

// --- landmarks --------------------------------------------------------------

inline std::string encode_landmarks(const LandmarkSet& lms) {
  std::string out = std::to_string(kLandmarkCount) + "\n";
  char buf[96];
  for (const auto& p : lms.points) {
    std::snprintf(buf, sizeof(buf), "%.6f %.6f\n", p.x, p.y);
    out += buf;
  }
  return out;
}

inline LandmarkSet decode_landmarks(std::string_view text, const std::string& what = "landmarks") {
  Cursor cur(text, what);
  const auto first = cur.read_line();
  if (detail::shortest(0).empty() || std::string(first) != std::to_string(kLandmarkCount)) {
    cur.fail("first line must be the point count 66");
  }
  LandmarkSet lms;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    lms[i].x = cur.read_double_token();
    lms[i].y = cur.read_double_token();
    const auto tail = cur.read_line();
    for (char c : tail) {
      if (!std::isspace(static_cast<unsigned char>(c))) cur.fail("trailing text on landmark line");
    }
  }
  lms.validate();
  return lms;
}

inline void write_landmarks(const std::filesystem::path& path, const LandmarkSet& lms) {
  write_file(path, encode_landmarks(lms));
}

inline LandmarkSet read_landmarks(const std::filesystem::path& path) {
  return decode_landmarks(read_file(path), path.string());
}

// --- labels CSV -------------------------------------------------------------

struct LabelRow {
  std::string file;
  AuLabels labels;
  bool operator==(const LabelRow&) const = default;
};

struct LabelTable {
  std::vector<int> au_ids;
  std::vector<LabelRow> rows;
  bool operator==(const LabelTable&) const = default;
};

inline std::string encode_labels_csv(const LabelTable& table) {
  std::string out = "file";
  for (int id : table.au_ids) out += ",AU" + std::to_string(id);
  out += "\n";
  for (const auto& row : table.rows) {
    out += row.file;
    for (double v : row.labels) out += "," + detail::shortest(v);
    out += "\n";
  }
  return out;
}

inline LabelTable decode_labels_csv(std::string_view text, const std::string& what = "labels csv") {
  Cursor cur(text, what);
  LabelTable table;
  const auto header = std::string(cur.read_line());
  std::stringstream hs(header);
  std::string cell;
  std::getline(hs, cell, ',');
  if (cell != "file") cur.fail("header must start with 'file'");
  while (std::getline(hs, cell, ',')) {
    if (cell.size() < 3 || cell.substr(0, 2) != "AU") cur.fail("bad AU column '" + cell + "'");
    table.au_ids.push_back(auhm::detail::parse_int<int>(cell.substr(2), what));
  }
  if (table.au_ids.empty()) cur.fail("no AU columns");
  while (!cur.at_end()) {
    const std::size_t row_start = cur.offset();
    const auto line = cur.read_line();
    if (auhm::detail::trim(line).empty()) continue;
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (cells.size() != table.au_ids.size() + 1) {
      throw FormatError(what + ": row has " + std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(table.au_ids.size() + 1) + " at byte " + std::to_string(row_start));
    }
    LabelRow row{std::string(cells[0]), {}};
    for (std::size_t i = 1; i < cells.size(); ++i) {
      const auto c = auhm::detail::trim(cells[i]);
      double v = 0;
      auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), v);
      if (ec != std::errc() || ptr != c.data() + c.size()) {
        throw FormatError(what + ": bad number '" + std::string(c) + "' at byte " + std::to_string(row_start));
      }
      row.labels.push_back(v);
    }
    validate_labels(row.labels);
    table.rows.push_back(std::move(row));
  }
  return table;
}

// --- key=value headers ------------------------------------------------------

using KeyValues = std::map<std::string, std::string>;

/// Parses "key=value" lines, ignoring blanks and '#' comments.
inline KeyValues parse_key_values(std::string_view text, const std::string& what = "config") {
  KeyValues kv;
  Cursor cur(text, what);
  while (!cur.at_end()) {
    const std::size_t start = cur.offset();
    auto line = cur.read_line();
    const auto hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = auhm::detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw FormatError(what + ": expected key=value at byte " + std::to_string(start));
    }
    kv[std::string(auhm::detail::trim(line.substr(0, eq)))] =
        std::string(auhm::detail::trim(line.substr(eq + 1)));
  }
  return kv;
}

inline std::vector<int> parse_int_list(std::string_view s, const std::string& what) {
  std::vector<int> out;
  while (!auhm::detail::trim(s).empty()) {
    const auto comma = s.find(',');
    out.push_back(auhm::detail::parse_int<int>(s.substr(0, comma), what));
    s = comma == std::string_view::npos ? std::string_view{} : s.substr(comma + 1);
  }
  return out;
}

inline std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

namespace detail {

inline KeyValues read_header_block(Cursor& cur) {
  KeyValues kv;
  while (true) {
    const auto line = cur.read_line();
    if (line.empty()) break;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) cur.fail("malformed header line '" + std::string(line) + "'");
    kv[std::string(line.substr(0, eq))] = std::string(line.substr(eq + 1));
  }
  return kv;
}

inline std::size_t header_size(const KeyValues& kv, const std::string& key, const Cursor& cur) {
  auto it = kv.find(key);
  if (it == kv.end()) cur.fail("header lacks '" + key + "'");
  return auhm::detail::parse_int<std::size_t>(it->second, "header key " + key);
}

}  // namespace detail

// --- checkpoint -------------------------------------------------------------

inline constexpr std::string_view kCheckpointMagic = "AUHM1\n";

inline std::string encode_checkpoint(const Checkpoint& ck) {
  std::string out(kCheckpointMagic);
  KeyValues kv = ck.header;
  kv["input_size"] = std::to_string(ck.config.input_size);
  kv["heatmap_size"] = std::to_string(ck.config.heatmap_size);
  kv["n_aus"] = std::to_string(ck.config.n_aus);
  kv["base_channels"] = std::to_string(ck.config.base_channels);
  kv["mid_channels"] = std::to_string(ck.config.mid_channels);
  kv["hourglass_depth"] = std::to_string(ck.config.hourglass_depth);
  kv["au_ids"] = join_ints(ck.au_ids);
  for (const auto& [k, v] : kv) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw FormatError("checkpoint header entry '" + k + "' is not representable");
    }
    out += k + "=" + v + "\n";
  }
  out += "\n";
  for (const auto& a : ck.arrays) {
    detail::put_u32(out, static_cast<std::uint32_t>(a.name.size()));
    out += a.name;
    detail::put_u32(out, static_cast<std::uint32_t>(a.shape.size()));
    for (auto e : a.shape) detail::put_u32(out, static_cast<std::uint32_t>(e));
    for (float v : a.values) detail::put_float_le(out, v);
  }
  return out;
}

inline Checkpoint decode_checkpoint(std::string_view bytes, const std::string& what = "checkpoint") {
  Cursor cur(bytes, what);
  if (bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) cur.fail("bad magic, not an AUHM1 checkpoint");
  cur.take(kCheckpointMagic.size());
  Checkpoint ck;
  KeyValues kv = detail::read_header_block(cur);
  ck.config.input_size = detail::header_size(kv, "input_size", cur);
  ck.config.heatmap_size = detail::header_size(kv, "heatmap_size", cur);
  ck.config.n_aus = detail::header_size(kv, "n_aus", cur);
  ck.config.base_channels = detail::header_size(kv, "base_channels", cur);
  ck.config.mid_channels = detail::header_size(kv, "mid_channels", cur);
  ck.config.hourglass_depth = detail::header_size(kv, "hourglass_depth", cur);
  if (!kv.count("au_ids")) cur.fail("header lacks 'au_ids'");
  ck.au_ids = parse_int_list(kv["au_ids"], what);
  if (ck.au_ids.size() != ck.config.n_aus) cur.fail("au_ids does not match n_aus");
  for (const char* key : {"input_size", "heatmap_size", "n_aus", "base_channels", "mid_channels",
                          "hourglass_depth", "au_ids"}) {
    kv.erase(key);
  }
  ck.header = std::move(kv);
  while (!cur.at_end()) {
    Checkpoint::Array a;
    const auto name_len = cur.read_u32();
    a.name = std::string(cur.take(name_len));
    const auto rank = cur.read_u32();
    if (rank > 8) cur.fail("implausible rank " + std::to_string(rank));
    for (std::uint32_t r = 0; r < rank; ++r) a.shape.push_back(cur.read_u32());
    const std::size_t count = shape_numel(a.shape);
    const auto raw = cur.take(4 * count);
    a.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) a.values[i] = detail::get_float_le<float>(raw.substr(4 * i, 4));
    ck.arrays.push_back(std::move(a));
  }
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  write_file(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path), path.string());
}

// --- heatmap stacks ---------------------------------------------------------

inline constexpr std::string_view kHeatmapMagic = "AUHS1\n";

inline std::string encode_heatmaps(const HeatmapStack& stack, const std::vector<int>& ids) {
  if (ids.size() != stack.channels) throw FormatError("heatmap stack: au id count mismatch");
  std::string out(kHeatmapMagic);
  out += "au_ids=" + join_ints(ids) + "\nchannels=" + std::to_string(stack.channels) +
         "\nsize=" + std::to_string(stack.size) + "\n\n";
  for (double v : stack.values) detail::put_float_le(out, v);
  return out;
}

inline std::pair<HeatmapStack, std::vector<int>> decode_heatmaps(std::string_view bytes,
                                                                 const std::string& what = "heatmaps") {
  Cursor cur(bytes, what);
  if (bytes.substr(0, kHeatmapMagic.size()) != kHeatmapMagic) cur.fail("bad magic, not an AUHS1 heatmap file");
  cur.take(kHeatmapMagic.size());
  KeyValues kv = detail::read_header_block(cur);
  const std::size_t channels = detail::header_size(kv, "channels", cur);
  const std::size_t size = detail::header_size(kv, "size", cur);
  if (!kv.count("au_ids")) cur.fail("header lacks 'au_ids'");
  auto ids = parse_int_list(kv["au_ids"], what);
  if (ids.size() != channels) cur.fail("au_ids does not match channels");
  HeatmapStack stack(channels, size);
  const auto raw = cur.take(8 * stack.values.size());
  for (std::size_t i = 0; i < stack.values.size(); ++i) {
    stack.values[i] = detail::get_float_le<double>(raw.substr(8 * i, 8));
  }
  if (!cur.at_end()) cur.fail("trailing bytes after heatmap payload");
  return {std::move(stack), std::move(ids)};
}

}  // namespace auhm::io
