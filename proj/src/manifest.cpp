#include <fstream>

#include <json.hpp>

#include "syncd/datagen.hpp"
#include "syncd/tensor_io.hpp"

namespace syncd {

namespace {
using nlohmann::json;

constexpr const char* kManifestKind = "syncd-sets";
constexpr int kManifestVersion = 1;

Tensor mask_tensor(const ForegroundMask& fg, std::size_t image) {
    Tensor t({fg.h, fg.w});
    for (std::size_t i = 0; i < fg.h * fg.w; ++i)
        t[i] = fg.per_image[image][i] ? 1.0 : 0.0;
    return t;
}

std::string stored_hash(const std::filesystem::path& p) { return hash_hex(hash_file(p)); }
}  // namespace

void write_manifest(const std::vector<ImageSet>& sets, const std::filesystem::path& path) {
    const std::filesystem::path dir = path.has_parent_path() ? path.parent_path() : ".";
    std::filesystem::create_directories(dir);
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open manifest for write: " + path.string());

    json header;
    header["manifest"] = kManifestKind;
    header["version"] = kManifestVersion;
    f << header.dump() << "\n";

    for (const ImageSet& set : sets) {
        json rec;
        rec["set_id"] = set.set_id;
        rec["path"] = set.path == GenPath::rigid ? "rigid" : "deformable";
        rec["prompts"] = set.prompts;
        rec["object_description"] = set.object_description;

        json images = json::array();
        json masks = json::array();
        for (std::size_t i = 0; i < set.images.size(); ++i) {
            const std::string img_name = set.set_id + "_img" + std::to_string(i) + ".sycd";
            const std::string msk_name = set.set_id + "_mask" + std::to_string(i) + ".sycd";
            save_tensor(dir / img_name, set.images[i]);
            save_tensor(dir / msk_name, mask_tensor(set.masks, i));
            images.push_back({{"file", img_name}, {"hash", stored_hash(dir / img_name)}});
            masks.push_back({{"file", msk_name}, {"hash", stored_hash(dir / msk_name)}});
        }
        rec["images"] = images;
        rec["masks"] = masks;

        rec["provenance"] = {{"seed", set.provenance.seed},
                             {"config_hash", set.provenance.config_hash},
                             {"warp_steps", set.provenance.warp_steps}};
        if (set.filter.evaluated) {
            rec["filter"] = {{"kept", set.filter.kept},
                             {"reasons", set.filter.reasons},
                             {"aesthetic", set.filter.aesthetic},
                             {"similarity", set.filter.similarity}};
        }
        f << rec.dump() << "\n";
    }
}

std::vector<ImageSet> read_manifest(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open manifest: " + path.string());
    const std::filesystem::path dir = path.has_parent_path() ? path.parent_path() : ".";

    std::string line;
    if (!std::getline(f, line)) throw CorruptionError("manifest is empty: " + path.string());
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw CorruptionError(std::string("bad manifest header: ") + e.what());
    }
    if (header.value("manifest", "") != kManifestKind ||
        header.value("version", -1) != kManifestVersion)
        throw CorruptionError("unrecognized manifest header: " + line);

    auto verified_load = [&](const json& entry) {
        const std::string file = entry.at("file").get<std::string>();
        const std::filesystem::path p = dir / file;
        if (stored_hash(p) != entry.at("hash").get<std::string>())
            throw CorruptionError("content hash mismatch for " + file);
        return load_tensor(p);
    };

    std::vector<ImageSet> sets;
    std::size_t line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw CorruptionError("bad manifest record at line " + std::to_string(line_no) + ": " +
                                  e.what());
        }
        ImageSet set;
        set.set_id = rec.at("set_id").get<std::string>();
        set.path = rec.at("path").get<std::string>() == "rigid" ? GenPath::rigid
                                                                : GenPath::deformable;
        set.prompts = rec.at("prompts").get<std::vector<std::string>>();
        set.object_description = rec.value("object_description", "");

        for (const json& entry : rec.at("images")) set.images.push_back(verified_load(entry));
        bool first_mask = true;
        for (const json& entry : rec.at("masks")) {
            const Tensor t = verified_load(entry);
            if (t.rank() != 2) throw CorruptionError("mask tensor is not rank-2 in " + set.set_id);
            if (first_mask) {
                set.masks.h = t.dim(0);
                set.masks.w = t.dim(1);
                first_mask = false;
            }
            std::vector<std::uint8_t> m(t.size());
            for (std::size_t i = 0; i < t.size(); ++i) m[i] = t[i] != 0.0 ? 1 : 0;
            set.masks.per_image.push_back(std::move(m));
        }

        const json& prov = rec.at("provenance");
        set.provenance.seed = prov.at("seed").get<std::uint64_t>();
        set.provenance.config_hash = prov.at("config_hash").get<std::string>();
        set.provenance.warp_steps = prov.at("warp_steps").get<std::vector<std::size_t>>();

        if (rec.contains("filter")) {
            const json& fl = rec.at("filter");
            set.filter.evaluated = true;
            set.filter.kept = fl.at("kept").get<bool>();
            set.filter.reasons = fl.at("reasons").get<std::vector<std::string>>();
            set.filter.aesthetic = fl.at("aesthetic").get<std::vector<double>>();
            set.filter.similarity = fl.at("similarity").get<double>();
        }
        sets.push_back(std::move(set));
    }
    return sets;
}

}  // namespace syncd
