#pragma once

#include "conflasso/conformal.hpp"
#include "conflasso/types.hpp"

#include <json.hpp>

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

namespace conflasso {

class parse_error : public input_error {
public:
    parse_error(const std::string& what, std::size_t row, std::size_t column, std::string token)
        : input_error(what), row_(row), column_(column), token_(std::move(token)) {}
    std::size_t row() const { return row_; }
    std::size_t column() const { return column_; }
    const std::string& token() const { return token_; }

private:
    std::size_t row_;
    std::size_t column_;
    std::string token_;
};

class non_finite_value : public parse_error {
public:
    using parse_error::parse_error;
};

/// Numeric table parsed from comma-separated text. Rows and columns are
/// 1-based in error messages.
inline Matrix read_csv_matrix(std::istream& in, bool header) {
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);
        if (header && line_no == 1) continue;
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string tok;
        std::size_t col = 0;
        while (std::getline(ss, tok, ',')) {
            ++col;
            std::size_t b = tok.find_first_not_of(" \t");
            std::size_t e = tok.find_last_not_of(" \t");
            std::string t = b == std::string::npos ? std::string() : tok.substr(b, e - b + 1);
            if (t.empty())
                throw parse_error("empty field at row " + std::to_string(line_no) + ", column " + std::to_string(col),
                                  line_no, col, t);
            errno = 0;
            char* end = nullptr;
            double v = std::strtod(t.c_str(), &end);
            if (end != t.c_str() + t.size())
                throw parse_error("cannot parse '" + t + "' at row " + std::to_string(line_no) + ", column " +
                                      std::to_string(col),
                                  line_no, col, t);
            if (!std::isfinite(v))
                throw non_finite_value("non-finite value '" + t + "' at row " + std::to_string(line_no) +
                                           ", column " + std::to_string(col),
                                       line_no, col, t);
            row.push_back(v);
        }
        if (!line.empty() && line.back() == ',')
            throw parse_error("trailing comma at row " + std::to_string(line_no), line_no, col + 1, "");
        if (width == 0) width = row.size();
        else if (row.size() != width)
            throw parse_error("row " + std::to_string(line_no) + " has " + std::to_string(row.size()) +
                                  " fields, expected " + std::to_string(width),
                              line_no, row.size(), "");
        rows.push_back(std::move(row));
    }
    Matrix M(static_cast<Index>(rows.size()), static_cast<Index>(width));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < width; ++j) M(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    return M;
}

inline Matrix read_csv_matrix(const std::string& path, bool header) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open '" + path + "'");
    return read_csv_matrix(in, header);
}

/// Training data: every column but the last is a covariate, the last is the response.
inline Dataset ingest_csv(std::istream& in, bool header = false) {
    Matrix M = read_csv_matrix(in, header);
    if (M.rows() < 1) throw input_error("data file has no rows");
    if (M.cols() < 2) throw input_error("data file needs at least one covariate column and a response column");
    return Dataset(M.leftCols(M.cols() - 1), M.col(M.cols() - 1));
}

inline Dataset ingest_csv(const std::string& path, bool header = false) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open '" + path + "'");
    return ingest_csv(in, header);
}

inline nlohmann::json to_json(const PredictionSet& s) {
    nlohmann::json iv = nlohmann::json::array();
    nlohmann::json src = nlohmann::json::array();
    for (const auto& i : s.intervals) {
        iv.push_back({i.lo, i.hi});
        src.push_back({to_string(i.lo_source), to_string(i.hi_source)});
    }
    return {{"alpha", s.alpha},
            {"intervals", iv},
            {"boundary_sources", src},
            {"single_interval", s.is_single_interval},
            {"n_segments", s.n_segments},
            {"n_fallbacks", s.n_fallbacks},
            {"runtime_ms", s.runtime_ms}};
}

inline void write_grid_csv(std::ostream& os, const GridResult& g) {
    os.precision(17);
    os << "y,in_set\n";
    for (std::size_t k = 0; k < g.y.size(); ++k) os << g.y[k] << ',' << (g.in_set[k] ? 1 : 0) << '\n';
}

}  // namespace conflasso
