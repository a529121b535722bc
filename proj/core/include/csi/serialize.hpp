#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace csi {

using json = nlohmann::json;

/// Named dense matrices flattened into one blob; order-preserving.
class NamedArrays {
 public:
  void add(const std::string& name, const Eigen::MatrixXd& m);
  bool has(const std::string& name) const;
  const Eigen::MatrixXd& get(const std::string& name) const;
  std::size_t count() const { return items_.size(); }
  const std::vector<std::pair<std::string, Eigen::MatrixXd>>& items() const { return items_; }

  json manifest() const;                  // names + shapes, in blob order
  std::vector<double> flatten() const;    // column-major per array, concatenated
  static NamedArrays unflatten(const json& manifest, const std::vector<double>& blob);

 private:
  std::vector<std::pair<std::string, Eigen::MatrixXd>> items_;
};

/// Binary container: magic, schema version, kind string, JSON header, raw
/// double blob. Loaders refuse unknown kinds and newer schemas.
struct BlobFile {
  std::uint16_t schema = 0;
  json header;
  std::vector<double> blob;
};

inline constexpr std::uint16_t kSchemaVersion = 1;

void write_blob_file(const std::string& path, const std::string& kind, std::uint16_t schema,
                     const json& header, const std::vector<double>& blob);
BlobFile read_blob_file(const std::string& path, const std::string& kind,
                        std::uint16_t max_schema);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace csi
