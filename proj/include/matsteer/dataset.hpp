#pragma once

// Activation records, per-attribute datasets, and their on-disk forms.
//
// Binary layout (little-endian):
//   header  "MATS" | version u32 | d_model u32 | record count u32
//   record  attribute u16 | polarity u8 | token_index u32 | sequence_id u64 | d_model x f32

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "matsteer/errors.hpp"
#include "matsteer/types.hpp"

namespace matsteer {

enum class Polarity : std::uint8_t { kPositive = 0, kNegative = 1 };

inline std::string_view to_string(Polarity p) noexcept {
  return p == Polarity::kPositive ? "positive" : "negative";
}

struct ActivationRecord {
  Vector vector;
  int attribute_id = 0;
  Polarity polarity = Polarity::kPositive;
  std::uint32_t token_index = 0;
  std::uint64_t sequence_id = 0;

  friend bool operator==(const ActivationRecord& a, const ActivationRecord& b) {
    return a.attribute_id == b.attribute_id && a.polarity == b.polarity &&
           a.token_index == b.token_index && a.sequence_id == b.sequence_id &&
           a.vector.size() == b.vector.size() && a.vector == b.vector;
  }
};

struct AttributeDataset {
  int attribute_id = 0;
  std::vector<ActivationRecord> positives;
  std::vector<ActivationRecord> negatives;

  std::size_t size() const noexcept { return positives.size() + negatives.size(); }
};

using DatasetList = std::vector<AttributeDataset>;

/// A token sequence with its attribute label and polarity.
struct LabeledSequence {
  std::vector<TokenId> tokens;
  int attribute_id = 0;
  Polarity polarity = Polarity::kPositive;
  std::uint64_t sequence_id = 0;
};

/// Records hold float32-representable values so the binary form is lossless.
inline Vector round_to_float(const Vector& v) {
  return v.unaryExpr([](double x) { return static_cast<double>(static_cast<float>(x)); });
}

inline int dimension_of(const DatasetList& datasets) {
  for (const auto& ds : datasets) {
    if (!ds.positives.empty()) return static_cast<int>(ds.positives.front().vector.size());
    if (!ds.negatives.empty()) return static_cast<int>(ds.negatives.front().vector.size());
  }
  return 0;
}

inline std::size_t record_count(const DatasetList& datasets) noexcept {
  std::size_t n = 0;
  for (const auto& ds : datasets) n += ds.size();
  return n;
}

/// Checks every dataset invariant; `require_both` demands non-empty buckets.
inline void validate_datasets(const DatasetList& datasets, bool require_both = true) {
  const int d = dimension_of(datasets);
  for (std::size_t t = 0; t < datasets.size(); ++t) {
    const auto& ds = datasets[t];
    if (ds.attribute_id != static_cast<int>(t))
      throw DatasetError("dataset at position " + std::to_string(t) + " has attribute_id " +
                         std::to_string(ds.attribute_id));
    if (require_both && (ds.positives.empty() || ds.negatives.empty()))
      throw DatasetError("attribute " + std::to_string(t) + " has an empty " +
                         (ds.positives.empty() ? "positive" : "negative") + " bucket");
    auto check = [&](const std::vector<ActivationRecord>& bucket, Polarity expected) {
      for (const auto& r : bucket) {
        if (r.attribute_id != ds.attribute_id)
          throw DatasetError("record with attribute " + std::to_string(r.attribute_id) +
                             " stored under attribute " + std::to_string(ds.attribute_id));
        if (r.polarity != expected)
          throw DatasetError("record polarity does not match its bucket for attribute " +
                             std::to_string(ds.attribute_id));
        if (r.vector.size() != d) throw DatasetError("inconsistent activation dimension");
        if (!r.vector.allFinite()) throw DatasetError("non-finite activation component");
      }
    };
    check(ds.positives, Polarity::kPositive);
    check(ds.negatives, Polarity::kNegative);
  }
}

/// Groups a flat record list into per-attribute datasets (attribute ids 0..T-1).
inline DatasetList group_records(const std::vector<ActivationRecord>& records, int n_attributes = -1) {
  int t_max = n_attributes;
  if (t_max < 0) {
    t_max = 0;
    for (const auto& r : records) t_max = std::max(t_max, r.attribute_id + 1);
  }
  DatasetList out(static_cast<std::size_t>(t_max));
  for (int t = 0; t < t_max; ++t) out[static_cast<std::size_t>(t)].attribute_id = t;
  for (const auto& r : records) {
    if (r.attribute_id < 0 || r.attribute_id >= t_max)
      throw DatasetError("attribute id " + std::to_string(r.attribute_id) + " out of range");
    auto& ds = out[static_cast<std::size_t>(r.attribute_id)];
    (r.polarity == Polarity::kPositive ? ds.positives : ds.negatives).push_back(r);
  }
  return out;
}

/// Attribute-major, positives before negatives.
inline std::vector<ActivationRecord> flatten(const DatasetList& datasets) {
  std::vector<ActivationRecord> out;
  out.reserve(record_count(datasets));
  for (const auto& ds : datasets) {
    out.insert(out.end(), ds.positives.begin(), ds.positives.end());
    out.insert(out.end(), ds.negatives.begin(), ds.negatives.end());
  }
  return out;
}

/// Runs every labeled sequence through `model` and files one record per
/// token under the sequence's attribute and polarity.
/// Model needs `extract_activations(int, TokenSpan)` and `check_layer(int)`.
template <typename Model>
DatasetList build_dataset(const Model& model, int layer, const std::vector<LabeledSequence>& sequences,
                          int n_attributes = -1) {
  model.check_layer(layer);
  int t_max = n_attributes;
  if (t_max < 0) {
    t_max = 0;
    for (const auto& s : sequences) t_max = std::max(t_max, s.attribute_id + 1);
  }
  std::vector<ActivationRecord> records;
  for (const auto& seq : sequences) {
    if (seq.attribute_id < 0 || seq.attribute_id >= t_max)
      throw DatasetError("sequence attribute id " + std::to_string(seq.attribute_id) + " out of range");
    const auto acts = model.extract_activations(layer, seq.tokens);
    for (std::size_t i = 0; i < acts.size(); ++i) {
      ActivationRecord r;
      r.vector = round_to_float(acts[i]);
      r.attribute_id = seq.attribute_id;
      r.polarity = seq.polarity;
      r.token_index = static_cast<std::uint32_t>(i);
      r.sequence_id = seq.sequence_id;
      records.push_back(std::move(r));
    }
  }
  auto datasets = group_records(records, t_max);
  validate_datasets(datasets, true);
  return datasets;
}

// ---------------------------------------------------------------------------
// Binary container

inline constexpr std::array<char, 4> kActivationMagic{'M', 'A', 'T', 'S'};
inline constexpr std::uint32_t kActivationFormatVersion = 1;
inline constexpr std::size_t kActivationHeaderSize = 16;

namespace detail {

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_integral_v<T> || std::is_floating_point_v<T>);
  using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
            std::conditional_t<sizeof(T) == 2, std::uint16_t,
            std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
              std::conditional_t<sizeof(T) == 2, std::uint16_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
    if (pos_ + sizeof(T) > bytes_.size())
      throw FormatError(std::string("truncated data reading ") + what, pos_);
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      bits |= static_cast<U>(static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i));
    pos_ += sizeof(T);
    return std::bit_cast<T>(bits);
  }

  std::string_view take(std::size_t n, const char* what) {
    if (pos_ + n > bytes_.size()) throw FormatError(std::string("truncated data reading ") + what, pos_);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path + "'");
}

/// Shortest decimal that parses back to the same value.
template <typename T>
std::string shortest(T value) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), end);
}

}  // namespace detail

inline std::string encode_activations(const std::vector<ActivationRecord>& records, int d_model) {
  std::string out;
  out.reserve(kActivationHeaderSize + records.size() * (15 + 4 * static_cast<std::size_t>(d_model)));
  out.append(kActivationMagic.data(), kActivationMagic.size());
  detail::put_le(out, kActivationFormatVersion);
  detail::put_le(out, static_cast<std::uint32_t>(d_model));
  detail::put_le(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    if (r.vector.size() != d_model) throw InputError("record dimension differs from d_model");
    if (r.attribute_id < 0 || r.attribute_id > 0xFFFF) throw InputError("attribute id does not fit u16");
    detail::put_le(out, static_cast<std::uint16_t>(r.attribute_id));
    detail::put_le(out, static_cast<std::uint8_t>(r.polarity));
    detail::put_le(out, r.token_index);
    detail::put_le(out, r.sequence_id);
    for (Eigen::Index i = 0; i < r.vector.size(); ++i) detail::put_le(out, static_cast<float>(r.vector[i]));
  }
  return out;
}

struct ActivationFile {
  int d_model = 0;
  std::vector<ActivationRecord> records;
};

inline ActivationFile decode_activations(std::string_view bytes) {
  detail::ByteReader in(bytes);
  if (bytes.size() < kActivationHeaderSize) throw FormatError("file shorter than the 16-byte header", 0);
  const auto magic = in.take(4, "magic");
  if (magic != std::string_view(kActivationMagic.data(), 4)) throw FormatError("bad magic, expected \"MATS\"", 0);
  const auto version = in.get<std::uint32_t>("version");
  if (version != kActivationFormatVersion)
    throw FormatError("unsupported format version " + std::to_string(version), 4);
  ActivationFile file;
  file.d_model = static_cast<int>(in.get<std::uint32_t>("d_model"));
  const auto count = in.get<std::uint32_t>("record count");
  const std::size_t record_size = 15 + 4 * static_cast<std::size_t>(file.d_model);
  if (in.remaining() != record_size * count)
    throw FormatError("payload size " + std::to_string(in.remaining()) + " does not match " +
                          std::to_string(count) + " records of " + std::to_string(record_size) + " bytes",
                      kActivationHeaderSize);
  file.records.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    ActivationRecord r;
    r.attribute_id = in.get<std::uint16_t>("attribute");
    const std::size_t polarity_offset = in.offset();
    const auto pol = in.get<std::uint8_t>("polarity");
    if (pol > 1) throw FormatError("invalid polarity byte " + std::to_string(pol), polarity_offset);
    r.polarity = static_cast<Polarity>(pol);
    r.token_index = in.get<std::uint32_t>("token index");
    r.sequence_id = in.get<std::uint64_t>("sequence id");
    r.vector.resize(file.d_model);
    for (int i = 0; i < file.d_model; ++i) {
      const std::size_t at = in.offset();
      const float v = in.get<float>("activation");
      if (!std::isfinite(v)) throw FormatError("non-finite activation component", at);
      r.vector[i] = v;
    }
    file.records.push_back(std::move(r));
  }
  return file;
}

inline void save_activations(const std::string& path, const std::vector<ActivationRecord>& records, int d_model) {
  detail::write_file(path, encode_activations(records, d_model));
}

inline ActivationFile load_activations(const std::string& path) {
  return decode_activations(detail::read_file(path));
}

// ---------------------------------------------------------------------------
// CSV export (lossless with respect to the binary container)

inline std::string activations_to_csv(const std::vector<ActivationRecord>& records, int d_model) {
  std::ostringstream out;
  out << "attribute,polarity,token_index,sequence_id";
  for (int i = 0; i < d_model; ++i) out << ",v" << i;
  out << '\n';
  for (const auto& r : records) {
    out << r.attribute_id << ',' << to_string(r.polarity) << ',' << r.token_index << ',' << r.sequence_id;
    for (Eigen::Index i = 0; i < r.vector.size(); ++i)
      out << ',' << detail::shortest(static_cast<float>(r.vector[i]));
    out << '\n';
  }
  return out.str();
}

inline ActivationFile activations_from_csv(std::string_view text) {
  ActivationFile file;
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty CSV", 0);
  file.d_model = static_cast<int>(std::count(line.begin(), line.end(), ',')) - 3;
  if (file.d_model < 0) throw FormatError("CSV header has too few columns", 0);
  std::size_t line_no = 1;
  std::size_t next_offset = line.size() + 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t line_start = next_offset;
    next_offset += line.size() + 1;
    if (line.empty()) continue;
    std::vector<std::string_view> cells;
    std::string_view rest(line);
    for (;;) {
      const auto comma = rest.find(',');
      cells.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (static_cast<int>(cells.size()) != file.d_model + 4)
      throw FormatError("wrong column count on CSV line " + std::to_string(line_no), line_start);
    auto parse_int = [&](std::string_view cell, auto& value) {
      auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (ec != std::errc{} || p != cell.data() + cell.size())
        throw FormatError("bad integer on CSV line " + std::to_string(line_no), line_start);
    };
    ActivationRecord r;
    parse_int(cells[0], r.attribute_id);
    if (cells[1] == "positive") r.polarity = Polarity::kPositive;
    else if (cells[1] == "negative") r.polarity = Polarity::kNegative;
    else throw FormatError("bad polarity on CSV line " + std::to_string(line_no), line_start);
    parse_int(cells[2], r.token_index);
    parse_int(cells[3], r.sequence_id);
    r.vector.resize(file.d_model);
    for (int i = 0; i < file.d_model; ++i) {
      float v = 0.0F;
      const auto cell = cells[static_cast<std::size_t>(4 + i)];
      auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc{} || p != cell.data() + cell.size())
        throw FormatError("bad float on CSV line " + std::to_string(line_no), line_start);
      r.vector[i] = v;
    }
    file.records.push_back(std::move(r));
  }
  return file;
}

}  // namespace matsteer
