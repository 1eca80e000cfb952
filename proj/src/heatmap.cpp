// SPDX-License-Identifier: Apache-2.0
#include "snelsd/heatmap.hpp"

#include <cmath>
#include <cstdio>

namespace snelsd {

namespace {

constexpr double kBoundary = 0.9;
const char kMarker[] = "▼";  // filled down-pointing triangle

std::string two_decimals(double r) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", r);
  return buf;
}

std::string html_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

HeatColor heat_color(double r) {
  if (!(r >= 0.0 && r <= 1.0)) {
    throw ContractError("boundary indicator " + std::to_string(r) + " outside [0, 1]");
  }
  auto lerp = [r](int lo, int hi) {
    return static_cast<int>(std::lround(lo + (hi - lo) * r));
  };
  return {lerp(220, 50), lerp(50, 180), 50};
}

std::string heatmap_ansi(const std::vector<ChunkLine>& lines) {
  std::string out;
  for (const ChunkLine& line : lines) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      const TokenChunk& cell = line[i];
      const HeatColor c = heat_color(cell.r);
      if (i > 0) out += ' ';
      out += "\x1b[48;2;" + std::to_string(c.red) + ";" + std::to_string(c.green) + ";" +
             std::to_string(c.blue) + "m\x1b[30m " + cell.token + " " + two_decimals(cell.r);
      if (cell.r > kBoundary) out += kMarker;
      out += " \x1b[0m";
    }
    out += '\n';
  }
  return out;
}

std::string heatmap_html(const std::vector<ChunkLine>& lines) {
  std::string out =
      "<!doctype html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n"
      "<title>chunk boundaries</title>\n<style>\n"
      "body { font-family: monospace; background: #ffffff; color: #111111; }\n"
      ".line { margin: 0.4em 0; }\n"
      ".cell { padding: 0.2em 0.35em; margin-right: 0.15em; border-radius: 3px;\n"
      "        color: #111111; display: inline-block; }\n"
      ".cell small { opacity: 0.75; margin-left: 0.3em; }\n"
      "</style>\n</head>\n<body>\n";
  for (const ChunkLine& line : lines) {
    out += "<div class=\"line\">";
    for (const TokenChunk& cell : line) {
      const HeatColor c = heat_color(cell.r);
      out += "<span class=\"cell\" style=\"background: rgb(" + std::to_string(c.red) + "," +
             std::to_string(c.green) + "," + std::to_string(c.blue) + ")\">" +
             html_escape(cell.token) + "<small>" + two_decimals(cell.r) + "</small>";
      if (cell.r > kBoundary) out += kMarker;
      out += "</span>";
    }
    out += "</div>\n";
  }
  out += "</body>\n</html>\n";
  return out;
}

}  // namespace snelsd
