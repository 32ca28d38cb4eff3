// Copyright Contributors to the covren project
// SPDX-License-Identifier: Apache-2.0
#include "covren/dataset.hpp"
#include "covren/image_io.hpp"
#include "dataset_fixtures.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>

namespace covren {
namespace {

namespace fs = std::filesystem;
using testing::random_image;
using testing::TempDir;

TEST(Png, BlackImageRoundTripsToZeros) {
  TempDir dir("png");
  write_png8(dir.path() / "black.png", Image(2, 2, 3));
  const PngData png = read_png(dir.path() / "black.png");
  EXPECT_EQ(png.width, 2);
  EXPECT_EQ(png.channels, 3);
  EXPECT_EQ(png.bit_depth, 8);
  for (std::uint16_t s : png.samples) EXPECT_EQ(s, 0);
}

TEST(Png, RandomImageRoundTripsWithinQuantization) {
  TempDir dir("png");
  std::mt19937_64 rng(50);
  for (int c : {1, 3}) {
    const Image img = random_image(rng, 13, 7, c);
    write_png8(dir.path() / "a.png", img);
    const Image back = read_png_image(dir.path() / "a.png");
    ASSERT_TRUE(back.same_shape(img));
    for (std::size_t i = 0; i < img.data.size(); ++i) {
      ASSERT_LE(std::abs(back.data[i] - img.data[i]), 1.0 / 510.0 + 1e-7);
      ASSERT_EQ(std::lround(back.data[i] * 255.0f), quantize_unit(img.data[i]));
    }
  }
}

TEST(Png, QuantizeRoundsAndClamps) {
  EXPECT_EQ(quantize_unit(0.0f), 0);
  EXPECT_EQ(quantize_unit(1.0f), 255);
  EXPECT_EQ(quantize_unit(0.5f), 128);
  EXPECT_EQ(quantize_unit(-0.2f), 0);
  EXPECT_EQ(quantize_unit(1.7f), 255);
}

TEST(Png, CorruptAndMissingFilesAreDistinct) {
  TempDir dir("png");
  std::ofstream(dir.path() / "bad.png") << "not a png at all";
  EXPECT_THROW(read_png(dir.path() / "bad.png"), FormatError);
  EXPECT_THROW(read_png(dir.path() / "absent.png"), IoError);
}

TEST(Pfm, DepthOneAndAHalfIsExactAndPreviewIsMillimetres) {
  TempDir dir("pfm");
  Image depth(3, 2, 1, 1.5f);
  write_pfm(dir.path() / "d.pfm", depth);
  const Image back = read_pfm(dir.path() / "d.pfm");
  for (float v : back.data) EXPECT_EQ(v, 1.5f);
  for (std::uint16_t mm : depth_preview_mm(depth)) EXPECT_EQ(mm, 1500);
}

TEST(Pfm, RandomDepthRoundTripIsBitExact) {
  TempDir dir("pfm");
  std::mt19937_64 rng(51);
  Image depth = random_image(rng, 17, 9, 1);
  for (float& v : depth.data) v *= 7.3f;
  depth.at(3, 4) = std::numeric_limits<float>::infinity();
  write_pfm(dir.path() / "d.pfm", depth);
  const Image back = read_pfm(dir.path() / "d.pfm");
  ASSERT_TRUE(back.same_shape(depth));
  EXPECT_EQ(0, std::memcmp(back.data.data(), depth.data.data(), depth.data.size() * sizeof(float)));
}

TEST(Pfm, RowsAreStoredBottomUp) {
  TempDir dir("pfm");
  Image depth(1, 2, 1);
  depth.at(0, 0) = 1.0f;
  depth.at(0, 1) = 2.0f;
  write_pfm(dir.path() / "d.pfm", depth);
  const std::string bytes = testing::file_bytes(dir.path() / "d.pfm");
  ASSERT_EQ(bytes.substr(0, 3), "Pf\n");
  float first = 0.0f;
  std::memcpy(&first, bytes.data() + bytes.size() - 8, 4);
  EXPECT_EQ(first, 2.0f);
}

TEST(Pfm, PreviewSaturatesAndZeroesInvalidDepth) {
  Image depth(4, 1, 1);
  depth.at(0, 0) = 70.0f;
  depth.at(1, 0) = -1.0f;
  depth.at(2, 0) = std::nanf("");
  depth.at(3, 0) = 0.0004f;
  const std::vector<std::uint16_t> mm = depth_preview_mm(depth);
  EXPECT_EQ(mm, (std::vector<std::uint16_t>{65535, 0, 0, 0}));
}

class GeneratedDataset : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("dataset");
    library_ = new VolumeLibrary(testing::procedural_library(4, 3, 16));
    options_ = testing::quick_options(3, 21);
    background_ = testing::floor_background(options_.generation.bin, 16);
    summary_ = generate_dataset(dir_->path(), *library_, background_, options_);
  }
  static void TearDownTestSuite() {
    delete dir_;
    delete library_;
    background_.reset();
  }
  static const fs::path& root() { return dir_->path(); }

  /// Copy of the dataset that a test may damage.
  static fs::path copy_to(const TempDir& dst) {
    fs::copy(root(), dst.path() / "ds", fs::copy_options::recursive);
    return dst.path() / "ds";
  }

  static TempDir* dir_;
  static VolumeLibrary* library_;
  static DatasetGenerationOptions options_;
  static std::shared_ptr<const ObjectVolume> background_;
  static DatasetGenerationSummary summary_;
};

TempDir* GeneratedDataset::dir_ = nullptr;
VolumeLibrary* GeneratedDataset::library_ = nullptr;
DatasetGenerationOptions GeneratedDataset::options_;
std::shared_ptr<const ObjectVolume> GeneratedDataset::background_;
DatasetGenerationSummary GeneratedDataset::summary_;

TEST_F(GeneratedDataset, LayoutAndManifestAreComplete) {
  EXPECT_EQ(summary_.scenes, 3);
  EXPECT_TRUE(fs::exists(root() / "volumes" / "background.covv"));
  for (const LibraryEntry& e : library_->entries) {
    EXPECT_TRUE(fs::exists(root() / "meshes" / (e.name + ".obj")));
    EXPECT_TRUE(fs::exists(root() / "volumes" / (e.name + ".covv")));
  }
  const std::vector<Json> entries = read_manifest(root());
  ASSERT_EQ(entries.size(), 3u);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    EXPECT_EQ(entries[i].at("scene_id").get<int>(), static_cast<int>(i));
    EXPECT_EQ(entries[i].at("format").get<int>(), kManifestFormat);
    EXPECT_TRUE(check_manifest_entry(entries[i]).empty()) << entries[i].dump();
    EXPECT_TRUE(fs::exists(root() / scene_dir_name(static_cast<int>(i)) / "cam0" / "rgb.png"));
  }
}

TEST_F(GeneratedDataset, ValidatesCleanWithCoherentMasks) {
  const DatasetReport r = validate_dataset(root());
  for (const DatasetFinding& f : r.findings) ADD_FAILURE() << f.scene_id << ": " << f.message;
  EXPECT_EQ(r.scenes, 3);
  EXPECT_GT(r.checked_pixels, 0);
  EXPECT_GE(r.agreement(), 0.99);
}

TEST_F(GeneratedDataset, LoadedRecordMatchesAFreshRender) {
  const Json entry = read_manifest(root()).at(1);
  const SceneRecord rec = load_scene_record(root(), entry);
  EXPECT_EQ(rec.scene_id, 1);
  const ComposedScene composed = generate_scene(*library_, options_.generation, 1);
  ASSERT_EQ(rec.cameras.size(), composed.cameras.size());
  ASSERT_EQ(rec.objects.size(), composed.objects.size());
  const Scene scene = to_render_scene(composed, *library_, background_);
  for (std::size_t k = 0; k < rec.cameras.size(); ++k) {
    const RenderOutput fresh = render_scene(scene, composed.cameras[k], options_.render);
    const LoadedCamera& cam = rec.cameras[k];
    EXPECT_EQ(0, std::memcmp(cam.depth.data.data(), fresh.depth.data.data(),
                             fresh.depth.data.size() * sizeof(float)));
    for (std::size_t i = 0; i < fresh.rgb.data.size(); ++i) {
      ASSERT_LE(std::abs(cam.rgb.data[i] - std::clamp(fresh.rgb.data[i], 0.0f, 1.0f)), 1.0 / 510.0 + 1e-6);
    }
    for (const auto& [id, mask] : fresh.modal_masks) {
      ASSERT_TRUE(cam.modal.count(id));
      for (std::size_t i = 0; i < mask.data.size(); ++i) {
        ASSERT_LE(std::abs(cam.modal.at(id).data[i] - mask.data[i]), 1.0 / 510.0 + 1e-6);
      }
    }
  }
}

TEST_F(GeneratedDataset, DeletedMaskIsExactlyOneFinding) {
  TempDir scratch("damaged");
  const fs::path ds = copy_to(scratch);
  const Json entry = read_manifest(ds).at(0);
  const std::string mask = entry.at("cameras").at(1).at("modal").begin()->get<std::string>();
  fs::remove(ds / mask);

  const DatasetReport r = validate_dataset(ds);
  ASSERT_EQ(r.findings.size(), 1u);
  EXPECT_EQ(r.findings[0].scene_id, 0);
  EXPECT_NE(r.findings[0].message.find(mask), std::string::npos);
  try {
    load_scene_record(ds, entry);
    FAIL() << "expected MissingFileError";
  } catch (const MissingFileError& e) {
    EXPECT_NE(std::string(e.what()).find(mask), std::string::npos);
  }
}

TEST_F(GeneratedDataset, CorruptDepthIsFormatError) {
  TempDir scratch("damaged");
  const fs::path ds = copy_to(scratch);
  const Json entry = read_manifest(ds).at(2);
  fs::resize_file(ds / entry.at("cameras").at(0).at("depth").get<std::string>(), 10);
  EXPECT_THROW(load_scene_record(ds, entry), FormatError);
  EXPECT_FALSE(validate_dataset(ds).clean());
}

TEST_F(GeneratedDataset, SwappedMaskBreaksCoherence) {
  TempDir scratch("damaged");
  const fs::path ds = copy_to(scratch);
  const Json entry = read_manifest(ds).at(0);
  const Json& modal = entry.at("cameras").at(0).at("modal");
  ASSERT_GE(modal.size(), 2u);
  auto it = modal.begin();
  const fs::path a = ds / it->get<std::string>();
  const fs::path b = ds / (++it)->get<std::string>();
  fs::rename(a, ds / "tmp.png");
  fs::rename(b, a);
  fs::rename(ds / "tmp.png", b);
  EXPECT_FALSE(validate_dataset(ds).clean());
}

TEST_F(GeneratedDataset, SchemaViolationIsReported) {
  Json entry = read_manifest(root()).at(0);
  entry.erase("cameras");
  EXPECT_FALSE(check_manifest_entry(entry).empty());
  EXPECT_THROW(load_scene_record(root(), entry), ManifestError);
  entry = read_manifest(root()).at(0);
  entry["format"] = 2;
  EXPECT_FALSE(check_manifest_entry(entry).empty());
}

TEST_F(GeneratedDataset, ExistingSceneIsRefusedUnlessOverwriting) {
  TempDir scratch("again");
  const fs::path ds = copy_to(scratch);
  EXPECT_THROW(generate_dataset(ds, *library_, background_, options_), DomainError);
  DatasetGenerationOptions o = options_;
  o.overwrite = true;
  EXPECT_NO_THROW(generate_dataset(ds, *library_, background_, o));
  EXPECT_EQ(testing::tree_difference(root(), ds), "");
}

TEST_F(GeneratedDataset, RegenerationIsByteIdenticalAcrossThreadCounts) {
  TempDir scratch("regen");
  DatasetGenerationOptions o = options_;
  o.generation.threads = 3;
  generate_dataset(scratch.path(), *library_, background_, o);
  EXPECT_EQ(testing::tree_difference(root(), scratch.path()), "");
}

TEST(Manifest, EmptyRootIsAFinding) {
  TempDir dir("empty");
  const DatasetReport r = validate_dataset(dir.path());
  ASSERT_EQ(r.findings.size(), 1u);
  EXPECT_NE(r.findings[0].message.find("empty dataset"), std::string::npos);
}

TEST(Manifest, MalformedLineNamesItsNumber) {
  TempDir dir("manifest");
  std::ofstream(dir.path() / "manifest.jsonl") << "{\"a\": 1}\n{broken\n";
  try {
    read_manifest(dir.path());
    FAIL() << "expected ManifestError";
  } catch (const ManifestError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(Manifest, WriteOrdersByScene) {
  TempDir dir("manifest");
  write_manifest(dir.path(), {Json{{"scene_id", 4}}, Json{{"scene_id", 1}}, Json{{"scene_id", 2}}});
  const std::vector<Json> back = read_manifest(dir.path());
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[0].at("scene_id"), 1);
  EXPECT_EQ(back[2].at("scene_id"), 4);
}

TEST(SceneRecord, MismatchedRenderSizeIsContractError) {
  TempDir dir("record");
  SceneRecordInput in;
  in.cameras.push_back(Camera{});
  in.cameras[0].intrinsics = {10, 10, 2, 2, 4, 4};
  RenderOutput r;
  r.rgb = Image(3, 4, 3);
  r.depth = Image(3, 4, 1);
  in.renders.push_back(r);
  EXPECT_THROW(write_scene_record(dir.path(), in), ContractError);
  EXPECT_FALSE(fs::exists(dir.path() / scene_dir_name(0)));
}

}  // namespace
}  // namespace covren
