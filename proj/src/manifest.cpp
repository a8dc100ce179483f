#include "msclip/manifest.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "msclip/errors.hpp"
#include "msclip/msr1.hpp"

namespace msclip {

using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json record_to_json(const ManifestRecord& rec) {
  ordered_json j;
  j["id"] = rec.id;
  j["image_path"] = rec.image_path;
  j["caption"] = rec.caption;
  ordered_json qa = ordered_json::array();
  for (const auto& [q, a] : rec.qa_pairs) {
    qa.push_back(ordered_json::array({q, a}));
  }
  j["qa_pairs"] = qa;
  j["class_labels"] = rec.class_labels;
  j["split"] = std::string(split_name(rec.split));
  return j;
}

ManifestRecord record_from_json(const ordered_json& j, std::size_t line_no,
                                const std::filesystem::path& path) {
  try {
    ManifestRecord rec;
    rec.id = j.at("id").get<std::string>();
    rec.image_path = j.at("image_path").get<std::string>();
    rec.caption = j.at("caption").get<std::string>();
    if (j.contains("qa_pairs") && !j["qa_pairs"].is_null()) {
      for (const auto& pair : j["qa_pairs"]) {
        rec.qa_pairs.emplace_back(pair.at(0).get<std::string>(),
                                  pair.at(1).get<std::string>());
      }
    }
    if (j.contains("class_labels") && !j["class_labels"].is_null()) {
      rec.class_labels = j["class_labels"].get<std::vector<std::string>>();
    }
    rec.split = split_from_name(j.at("split").get<std::string>());
    return rec;
  } catch (const ordered_json::exception& e) {
    throw IoError("manifest line " + std::to_string(line_no) + " of " +
                  path.string() + ": " + e.what());
  }
}

}  // namespace

void write_manifest(const std::filesystem::path& path,
                    const std::vector<ManifestRecord>& records) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for write: " + path.string());
  for (const auto& rec : records) {
    os << record_to_json(rec).dump() << "\n";
  }
  if (!os) throw IoError("write failed: " + path.string());
}

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open manifest: " + path.string());
  std::vector<ManifestRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const ordered_json::exception& e) {
      throw IoError("manifest line " + std::to_string(line_no) + " of " +
                    path.string() + ": " + e.what());
    }
    records.push_back(record_from_json(j, line_no, path));
  }
  return records;
}

void write_dataset(const std::filesystem::path& dir,
                   const std::vector<SceneRecord>& records) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  std::vector<ManifestRecord> manifest;
  manifest.reserve(records.size());
  for (const auto& rec : records) {
    const std::string filename = rec.id + ".msr1";
    write_image_msr1(dir / filename, rec.image);
    ManifestRecord m;
    m.id = rec.id;
    m.image_path = filename;
    m.caption = rec.caption;
    m.qa_pairs = rec.qa_pairs;
    m.class_labels = rec.class_labels;
    m.split = rec.split;
    manifest.push_back(std::move(m));
  }
  write_manifest(dir / "manifest.jsonl", manifest);
}

namespace {

std::vector<SceneRecord> load_records(const std::filesystem::path& manifest_path,
                                      bool with_images) {
  const auto rows = read_manifest(manifest_path);
  const auto base = manifest_path.parent_path();
  std::vector<SceneRecord> records;
  records.reserve(rows.size());
  for (const auto& row : rows) {
    SceneRecord rec;
    rec.id = row.id;
    rec.caption = row.caption;
    rec.qa_pairs = row.qa_pairs;
    rec.class_labels = row.class_labels;
    rec.split = row.split;
    if (with_images) rec.image = read_image_msr1(base / row.image_path);
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace

std::vector<SceneRecord> load_dataset(
    const std::filesystem::path& manifest_path) {
  return load_records(manifest_path, true);
}

std::vector<SceneRecord> load_dataset_captions(
    const std::filesystem::path& manifest_path) {
  return load_records(manifest_path, false);
}

}  // namespace msclip
