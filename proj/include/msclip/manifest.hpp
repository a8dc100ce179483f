#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "msclip/image.hpp"

namespace msclip {

// One JSON object per line: {id, image_path, caption, qa_pairs,
// class_labels, split}. image_path is relative to the manifest's directory.
struct ManifestRecord {
  std::string id;
  std::string image_path;
  std::string caption;
  std::vector<std::pair<std::string, std::string>> qa_pairs;
  std::vector<std::string> class_labels;
  Split split = Split::Train;
};

void write_manifest(const std::filesystem::path& path,
                    const std::vector<ManifestRecord>& records);
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);

// Writes every scene raster as <id>.msr1 plus manifest.jsonl into dir.
void write_dataset(const std::filesystem::path& dir,
                   const std::vector<SceneRecord>& records);

// Loads rasters referenced by a manifest. Missing files throw IoError.
std::vector<SceneRecord> load_dataset(
    const std::filesystem::path& manifest_path);

// Manifest rows only (no raster reads), for text-side tooling.
std::vector<SceneRecord> load_dataset_captions(
    const std::filesystem::path& manifest_path);

}  // namespace msclip
