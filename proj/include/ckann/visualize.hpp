#pragma once

// Attention heatmaps as a single self-contained HTML page: one row of cells
// per attention view, cell background intensity proportional to the weight.

#include <cmath>
#include <string>
#include <vector>

#include "ckann/common.hpp"
#include "ckann/model.hpp"
#include "ckann/trainer.hpp"

namespace ckann {

namespace detail {

inline std::string html_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline void check_normalized(const std::vector<double>& w,
                             const std::string& name) {
  double sum = 0.0;
  for (double x : w) {
    if (x < -1e-12)
      throw NumericError("attention row " + name + " has negative weight");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-6)
    throw NumericError("attention row " + name + " sums to " +
                       fmt_double(sum));
}

inline std::string heat_row(const std::string& label,
                            const std::vector<std::string>& cells,
                            const std::vector<double>& weights) {
  check_normalized(weights, label);
  double mx = 0.0;
  for (double w : weights) mx = std::max(mx, w);
  std::string out = "<div class=\"row\"><span class=\"label\">" +
                    html_escape(label) + "</span>";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    double intensity = mx > 0 ? weights[i] / mx : 0.0;
    char style[96];
    std::snprintf(style, sizeof(style), "background: rgba(200,60,30,%.4f)",
                  0.85 * intensity);
    out += "<span class=\"cell\" style=\"" + std::string(style) + "\" title=\"" +
           fmt_double(weights[i]) + "\">" + html_escape(cells[i]) + "</span>";
  }
  return out + "</div>\n";
}

}  // namespace detail

// Which trace entries render over tokens vs over mention names.
inline std::vector<std::string> token_level_views(Variant v) {
  switch (v) {
    case Variant::KNN: return {};
    case Variant::KANN_SELF: return {"knowledge_attention", "pair_attention"};
    case Variant::KANN_CO: return {"co_attention"};
    case Variant::KANN_MULTI: return {"word_view", "knowledge_view"};
    case Variant::CKANN: return {"word_view"};
  }
  return {};
}

inline std::string render_heatmap(const std::string& qid, Variant variant,
                                  const EncodedQuestion& question,
                                  const std::vector<ForwardOutput>& outputs) {
  std::string body;
  body += "<h1>attention for " + detail::html_escape(qid) + "</h1>\n";

  auto render_sentence = [&](const std::string& side_prefix,
                             const EncodedSentence& sent,
                             const AttentionTrace& trace) {
    std::string out;
    auto views = token_level_views(variant);
    if (views.empty()) {
      std::vector<double> uniform(sent.tokens.size(),
                                  1.0 / static_cast<double>(sent.tokens.size()));
      out += detail::heat_row(side_prefix + " (uniform, variant has no readout weights)",
                              sent.tokens, uniform);
      return out;
    }
    for (const auto& view : views) {
      auto it = trace.rows.find(side_prefix + "." + view);
      if (it == trace.rows.end() || it->second.empty()) continue;
      out += detail::heat_row(side_prefix + " " + view, sent.tokens,
                              it->second.front());
    }
    if (variant == Variant::CKANN) {
      auto it = trace.rows.find(side_prefix + ".knowledge_view");
      if (it != trace.rows.end() && !it->second.empty()) {
        std::vector<std::string> cells = sent.mention_names;
        if (cells.size() != it->second.front().size())
          cells.assign(it->second.front().size(), "(none)");
        out += detail::heat_row(side_prefix + " knowledge_view", cells,
                                it->second.front());
      }
    }
    return out;
  };

  for (std::size_t c = 0; c < outputs.size(); ++c) {
    body += "<h2>candidate " + std::to_string(c) +
            " (label " + std::to_string(question.labels[c]) + ", score " +
            fmt_double(outputs[c].prob.value()) + ")</h2>\n";
    body += render_sentence("q", question.question, outputs[c].trace);
    body += render_sentence("a", question.candidates[c], outputs[c].trace);
  }

  return "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">\n"
         "<style>\n"
         "body { font-family: sans-serif; margin: 2em; }\n"
         ".row { margin: 0.3em 0; }\n"
         ".label { display: inline-block; min-width: 16em; color: #555; }\n"
         ".cell { padding: 2px 5px; margin: 1px; border-radius: 3px; "
         "display: inline-block; }\n"
         "</style></head><body>\n" +
         body + "</body></html>\n";
}

}  // namespace ckann
