#include <cstdio>
#include <fstream>

#include "pafa/errors.hpp"
#include "pafa/eval.hpp"
#include "pafa/feature_store.hpp"
#include "pafa/model.hpp"

namespace pafa {

namespace {

constexpr std::size_t kEvalChunk = 64;

int argmax_row(const RowVectorX<float>& row) {
  int best = 0;
  for (Index c = 1; c < row.size(); ++c)
    if (row[c] > row[best]) best = static_cast<int>(c);
  return best;
}

}  // namespace

Predictions predict(const ModelParams<float>& params, const std::vector<SampleMeta>& rows,
                    const FeatureStore& features) {
  Predictions out;
  for (std::size_t start = 0; start < rows.size(); start += kEvalChunk) {
    const std::size_t stop = std::min(rows.size(), start + kEvalChunk);
    std::vector<const MatrixX<float>*> batch;
    for (std::size_t i = start; i < stop; ++i) batch.push_back(&features.get(rows[i].sample_id));
    const auto fw = forward(params, batch);
    for (std::size_t i = start; i < stop; ++i) {
      out.sample_ids.push_back(rows[i].sample_id);
      out.preds.push_back(argmax_row(fw.logits.row(static_cast<Index>(i - start))));
      out.labels.push_back(static_cast<int>(rows[i].label));
      out.patients.push_back(rows[i].patient);
    }
  }
  return out;
}

EmbeddingExport export_embeddings(const ModelParams<float>& params,
                                  const std::vector<SampleMeta>& rows,
                                  const FeatureStore& features,
                                  const std::filesystem::path& out_path) {
  EmbeddingExport report;
  report.used_encoder_fallback = !params.has_projection();
  const int dim = report.used_encoder_fallback ? params.config().embed_dim()
                                               : params.config().proj_dim;

  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw IoError("cannot open embedding export: " + out_path.string());
  out << "sample_id,patient,label,split";
  for (int i = 0; i < dim; ++i) out << ",e" << i;
  if (report.used_encoder_fallback) out << ",fallback";
  out << "\n";

  for (std::size_t start = 0; start < rows.size();) {
    std::vector<const MatrixX<float>*> batch;
    std::vector<std::size_t> batch_rows;
    while (start < rows.size() && batch.size() < kEvalChunk) {
      try {
        batch.push_back(&features.get(rows[start].sample_id));
        batch_rows.push_back(start);
      } catch (const DataError&) {
        report.missing.push_back(rows[start].sample_id);
      }
      ++start;
    }
    if (batch.empty()) continue;
    const auto fw = forward(params, batch);
    const MatrixX<float>& emb = report.used_encoder_fallback ? fw.encoder_out : fw.proj;
    for (std::size_t b = 0; b < batch_rows.size(); ++b) {
      const auto& row = rows[batch_rows[b]];
      out << row.sample_id << ',' << row.patient << ',' << to_string(row.label) << ','
          << to_string(row.split);
      for (Index c = 0; c < emb.cols(); ++c) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.7g", static_cast<double>(emb(static_cast<Index>(b), c)));
        out << ',' << buf;
      }
      if (report.used_encoder_fallback) out << ",1";
      out << "\n";
      ++report.rows_written;
    }
  }
  if (!out) throw IoError("embedding export write failed: " + out_path.string());
  return report;
}

void save_predictions_csv(const std::filesystem::path& path, const Predictions& p) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open predictions file for writing: " + path.string());
  out << "sample_id,patient,label,pred\n";
  for (std::size_t i = 0; i < p.preds.size(); ++i) {
    out << p.sample_ids[i] << ',' << p.patients[i] << ','
        << to_string(static_cast<ClassLabel4>(p.labels[i])) << ','
        << to_string(static_cast<ClassLabel4>(p.preds[i])) << "\n";
  }
  if (!out) throw IoError("predictions write failed: " + path.string());
}

Predictions load_predictions_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open predictions file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty predictions file: " + path.string());
  Predictions p;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto pos = line.find(',', start);
      if (pos == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, pos - start));
      start = pos + 1;
    }
    if (fields.size() != 4)
      throw ParseError("expected 4 fields at " + path.string() + ":" + std::to_string(line_no));
    p.sample_ids.push_back(fields[0]);
    p.patients.push_back(static_cast<std::uint32_t>(std::stoul(fields[1])));
    p.labels.push_back(static_cast<int>(parse_label4(fields[2])));
    p.preds.push_back(static_cast<int>(parse_label4(fields[3])));
  }
  return p;
}

}  // namespace pafa
