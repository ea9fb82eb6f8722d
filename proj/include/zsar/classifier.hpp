#pragma once

#include "zsar/embedding.hpp"
#include "zsar/labels.hpp"

#include <cstddef>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace zsar {

struct ClassEmbedding {
    ActionClass action;
    EmbeddingVector z;
    std::size_t M = 0;  ///< texts averaged into z
};

struct Prediction {
    std::vector<std::pair<ActionClass, double>> ranking;  ///< score descending, ties by class index
    ActionClass predicted;
};

/// Componentwise mean of the rows, accumulated in double. DomainError on an
/// empty matrix.
EmbeddingVector mean_rows(const EmbeddingMatrix& rows);

/// Mean over the N frame embeddings of a video. With `normalize_rows` each
/// row is first scaled to unit length.
EmbeddingVector video_embedding(const EmbeddingMatrix& frame_embs, bool normalize_rows = false);

/// Mean over the M text embeddings of a class.
EmbeddingVector class_embedding(const EmbeddingMatrix& text_embs, bool normalize_rows = false);

double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

/// Cosine similarity of `vbar` against every class, ranked. Throws
/// DegenerateEmbeddingError for a zero-norm or non-finite vbar or z_j,
/// DomainError for an empty class list, ShapeError on a dim mismatch.
Prediction predict(const EmbeddingVector& vbar, std::span<const ClassEmbedding> classes);

/// True iff `truth` is among the first k entries. DomainError unless
/// 1 <= k <= ranking size.
bool topk_hit(const Prediction& prediction, const ActionClass& truth, std::size_t k);

/// Writes the class embeddings (as float32, keyed by raw id) in the
/// embedding-table format.
EmbeddingTable class_embedding_table(std::span<const ClassEmbedding> classes);
void write_class_embeddings(const std::filesystem::path& path, std::span<const ClassEmbedding> classes);

}  // namespace zsar
