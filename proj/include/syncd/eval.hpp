#ifndef SYNCD_EVAL_HPP
#define SYNCD_EVAL_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "syncd/datagen.hpp"
#include "syncd/tensor.hpp"

namespace syncd {

struct EmptyMaskError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// sqrt(text_score * image_score); both arguments must lie in [0, 1].
double geometric_score(double text_score, double image_score);

struct ClusterSimilarity {
    std::vector<double> per_set;          // one entry per scored set
    std::vector<std::string> set_ids;     // matching set ids
    std::vector<std::string> skipped;     // singleton sets, recorded with a warning
    double mean = 0.0;
};

// Mean pairwise embedding similarity within each set, plus the dataset mean.
// Singleton sets cannot be scored and are skipped.
ClusterSimilarity intra_cluster_similarity(const std::vector<ImageSet>& sets,
                                           const FeatureExtractor& extractor);

// Background pixels replaced by fill, then cropped to the mask's tight
// bounding box. mask is row-major h*w over the image grid.
Tensor masked_crop(const Tensor& image, const std::vector<std::uint8_t>& mask,
                   std::size_t mask_h, std::size_t mask_w, double fill = 128.0 / 255.0);

struct ScoreRow {
    std::string sample_id;
    double text_score = 0.0;
    double image_score = 0.0;
    double combined = 0.0;
};

// Input CSV rows: sample_id,text_score,image_score (header optional).
std::vector<ScoreRow> read_score_csv(const std::filesystem::path& path);

// Output: one combined-score row per sample plus a trailing summary block with
// the column means.
void write_score_csv(const std::filesystem::path& path, const std::vector<ScoreRow>& rows);

std::vector<ScoreRow> combine_scores(std::vector<ScoreRow> rows);

}  // namespace syncd

#endif
