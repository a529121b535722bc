#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "csi/common.hpp"
#include "csi/serialize.hpp"

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("named arrays flatten and unflatten losslessly in order") {
  csi::NamedArrays arrays;
  Eigen::MatrixXd a(2, 3), b(1, 4);
  a << 1, 2, 3, 4, 5, 6;
  b << -0.5, 0.25, 1e-300, 7;
  arrays.add("enc.w", a);
  arrays.add("head.b", b);
  CHECK(arrays.count() == 2);
  CHECK(arrays.has("enc.w"));
  CHECK_FALSE(arrays.has("missing"));
  CHECK_THROWS_AS(arrays.get("missing"), csi::Error);
  CHECK_THROWS_AS(arrays.add("enc.w", a), csi::Error);

  std::vector<double> blob = arrays.flatten();
  CHECK(blob.size() == 10);
  csi::NamedArrays back = csi::NamedArrays::unflatten(arrays.manifest(), blob);
  CHECK(back.get("enc.w") == a);
  CHECK(back.get("head.b") == b);
  CHECK(back.items()[0].first == "enc.w");
  CHECK(back.items()[1].first == "head.b");

  blob.pop_back();
  CHECK_THROWS_AS(csi::NamedArrays::unflatten(arrays.manifest(), blob), csi::Error);
}

TEST_CASE("blob files round trip bytes and metadata") {
  std::string path = temp_path("csi-test-blob.bin");
  csi::json header = {{"alpha", 0.125}, {"names", {"x", "y"}}};
  std::vector<double> blob = {1.0, -2.5, 3e-9, 0.0};
  csi::write_blob_file(path, "csi.test", 1, header, blob);
  csi::BlobFile f = csi::read_blob_file(path, "csi.test", 1);
  CHECK(f.schema == 1);
  CHECK(f.header == header);
  CHECK(f.blob == blob);
  std::remove(path.c_str());
}

TEST_CASE("loaders refuse foreign kinds and newer schemas") {
  std::string path = temp_path("csi-test-kind.bin");
  csi::write_blob_file(path, "csi.test", 2, csi::json::object(), {});
  CHECK_THROWS_WITH_AS(csi::read_blob_file(path, "csi.other", 2),
                       doctest::Contains("csi.other"), csi::Error);
  CHECK_THROWS_AS(csi::read_blob_file(path, "csi.test", 1), csi::Error);
  CHECK_NOTHROW(csi::read_blob_file(path, "csi.test", 2));
  std::remove(path.c_str());
}

TEST_CASE("loaders reject truncated and non-container files") {
  std::string path = temp_path("csi-test-trunc.bin");
  csi::write_blob_file(path, "csi.test", 1, {{"k", 1}}, {1.0, 2.0, 3.0});
  auto all = csi::read_text_file(path);
  csi::write_text_file(path, all.substr(0, all.size() - 9));
  CHECK_THROWS_AS(csi::read_blob_file(path, "csi.test", 1), csi::Error);

  csi::write_text_file(path, "not a container at all");
  CHECK_THROWS_AS(csi::read_blob_file(path, "csi.test", 1), csi::Error);
  CHECK_THROWS_AS(csi::read_blob_file(temp_path("csi-test-missing.bin"), "csi.test", 1),
                  csi::Error);
  std::remove(path.c_str());
}

TEST_CASE("text files round trip binary-safe content") {
  std::string path = temp_path("csi-test-text.txt");
  std::string content = "line1\nline2\0embedded";
  content += std::string(1, '\0') + "tail";
  csi::write_text_file(path, content);
  CHECK(csi::read_text_file(path) == content);
  std::remove(path.c_str());
}
