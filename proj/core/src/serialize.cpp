#include "csi/serialize.hpp"

#include <cstring>
#include <fstream>

#include "csi/common.hpp"

namespace csi {

void NamedArrays::add(const std::string& name, const Eigen::MatrixXd& m) {
  require(!has(name), "named arrays: duplicate name " + name);
  items_.emplace_back(name, m);
}

bool NamedArrays::has(const std::string& name) const {
  for (const auto& it : items_)
    if (it.first == name) return true;
  return false;
}

const Eigen::MatrixXd& NamedArrays::get(const std::string& name) const {
  for (const auto& it : items_)
    if (it.first == name) return it.second;
  fail("named arrays: missing array " + name);
}

json NamedArrays::manifest() const {
  json arr = json::array();
  for (const auto& it : items_)
    arr.push_back({{"name", it.first},
                   {"rows", it.second.rows()},
                   {"cols", it.second.cols()}});
  return arr;
}

std::vector<double> NamedArrays::flatten() const {
  std::size_t total = 0;
  for (const auto& it : items_) total += static_cast<std::size_t>(it.second.size());
  std::vector<double> blob;
  blob.reserve(total);
  for (const auto& it : items_)
    blob.insert(blob.end(), it.second.data(), it.second.data() + it.second.size());
  return blob;
}

NamedArrays NamedArrays::unflatten(const json& manifest, const std::vector<double>& blob) {
  NamedArrays out;
  std::size_t offset = 0;
  for (const json& rec : manifest) {
    long rows = rec.at("rows").get<long>();
    long cols = rec.at("cols").get<long>();
    std::size_t n = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    require(offset + n <= blob.size(), "named arrays: blob shorter than manifest");
    Eigen::MatrixXd m(rows, cols);
    std::memcpy(m.data(), blob.data() + offset, n * sizeof(double));
    out.add(rec.at("name").get<std::string>(), m);
    offset += n;
  }
  require(offset == blob.size(), "named arrays: blob longer than manifest");
  return out;
}

namespace {
constexpr char kMagic[4] = {'C', 'S', 'I', 'B'};

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::string& what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  require(static_cast<bool>(is), "blob file: truncated while reading " + what);
  return v;
}
}  // namespace

void write_blob_file(const std::string& path, const std::string& kind, std::uint16_t schema,
                     const json& header, const std::vector<double>& blob) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), "cannot open for writing: " + path);
  os.write(kMagic, 4);
  write_pod<std::uint16_t>(os, schema);
  std::string hdr = header.dump();
  write_pod<std::uint16_t>(os, static_cast<std::uint16_t>(kind.size()));
  os.write(kind.data(), static_cast<std::streamsize>(kind.size()));
  write_pod<std::uint64_t>(os, hdr.size());
  os.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
  write_pod<std::uint64_t>(os, blob.size());
  os.write(reinterpret_cast<const char*>(blob.data()),
           static_cast<std::streamsize>(blob.size() * sizeof(double)));
  require(static_cast<bool>(os), "write failed: " + path);
}

BlobFile read_blob_file(const std::string& path, const std::string& kind,
                        std::uint16_t max_schema) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), "cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  require(static_cast<bool>(is) && std::memcmp(magic, kMagic, 4) == 0,
          "not a recognized container: " + path);
  BlobFile out;
  out.schema = read_pod<std::uint16_t>(is, "schema");
  require(out.schema <= max_schema,
          path + ": schema " + std::to_string(out.schema) + " is newer than supported " +
              std::to_string(max_schema));
  auto klen = read_pod<std::uint16_t>(is, "kind length");
  std::string file_kind(klen, '\0');
  is.read(file_kind.data(), klen);
  require(static_cast<bool>(is), "blob file: truncated kind");
  require(file_kind == kind,
          path + ": container kind '" + file_kind + "' does not match expected '" + kind + "'");
  auto hlen = read_pod<std::uint64_t>(is, "header length");
  std::string hdr(hlen, '\0');
  is.read(hdr.data(), static_cast<std::streamsize>(hlen));
  require(static_cast<bool>(is), "blob file: truncated header");
  out.header = json::parse(hdr);
  auto blen = read_pod<std::uint64_t>(is, "blob length");
  out.blob.resize(blen);
  is.read(reinterpret_cast<char*>(out.blob.data()),
          static_cast<std::streamsize>(blen * sizeof(double)));
  require(static_cast<bool>(is), "blob file: truncated payload");
  return out;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), "cannot open for writing: " + path);
  os << content;
  require(static_cast<bool>(os), "write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), "cannot open: " + path);
  std::string s((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return s;
}

}  // namespace csi
