#include "coadapt/metric_trace.hpp"

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "coadapt/common.hpp"

namespace coadapt {

namespace {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& token, std::size_t line_no) {
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0')
        throw ParseError("metric trace: bad float '" + token + "' on line " +
                         std::to_string(line_no));
    return v;
}

std::uint64_t parse_u64(const std::string& token, std::size_t line_no) {
    char* end = nullptr;
    const std::uint64_t v = std::strtoull(token.c_str(), &end, 10);
    if (end == token.c_str() || *end != '\0')
        throw ParseError("metric trace: bad integer '" + token + "' on line " +
                         std::to_string(line_no));
    return v;
}

}  // namespace

void MetricTrace::validate() const {
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (rows[i].step <= rows[i - 1].step)
            throw DomainError("MetricTrace: steps must be strictly increasing");
}

void write_metric_trace(const MetricTrace& trace, const std::string& path) {
    trace.validate();
    std::ofstream out(path);
    if (!out) throw IoError("write_metric_trace: cannot open '" + path + "'");
    for (const std::string& line : trace.provenance) out << "# " << line << '\n';
    out << kMetricCsvHeader << '\n';
    for (const MetricRow& r : trace.rows) {
        out << r.step << ',' << format_double(r.loss) << ',' << format_double(r.mean_q)
            << ',' << format_double(r.feat_dot) << ',' << format_double(r.cosine) << ','
            << r.srank << ',' << format_double(r.eval_return) << ','
            << format_double(r.r_td) << ',' << (r.diverged ? 1 : 0) << '\n';
    }
    if (!out) throw IoError("write_metric_trace: write to '" + path + "' failed");
}

MetricTrace read_metric_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("read_metric_trace: cannot open '" + path + "'");
    MetricTrace trace;
    std::string line;
    std::size_t line_no = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::string body = line.substr(1);
            if (!body.empty() && body[0] == ' ') body.erase(0, 1);
            trace.provenance.push_back(body);
            continue;
        }
        if (!saw_header) {
            if (line != kMetricCsvHeader)
                throw ParseError("metric trace: unexpected header on line " +
                                 std::to_string(line_no));
            saw_header = true;
            continue;
        }
        std::vector<std::string> fields;
        std::string current;
        for (char c : line) {
            if (c == ',') {
                fields.push_back(current);
                current.clear();
            } else {
                current.push_back(c);
            }
        }
        fields.push_back(current);
        if (fields.size() != 9)
            throw ParseError("metric trace: expected 9 fields on line " +
                             std::to_string(line_no));
        MetricRow r;
        r.step = parse_u64(fields[0], line_no);
        r.loss = parse_double(fields[1], line_no);
        r.mean_q = parse_double(fields[2], line_no);
        r.feat_dot = parse_double(fields[3], line_no);
        r.cosine = parse_double(fields[4], line_no);
        r.srank = parse_u64(fields[5], line_no);
        r.eval_return = parse_double(fields[6], line_no);
        r.r_td = parse_double(fields[7], line_no);
        const std::uint64_t flag = parse_u64(fields[8], line_no);
        if (flag > 1)
            throw ParseError("metric trace: diverged flag must be 0/1 on line " +
                             std::to_string(line_no));
        r.diverged = flag == 1;
        trace.rows.push_back(r);
    }
    if (!saw_header) throw ParseError("metric trace: '" + path + "' has no header row");
    trace.validate();
    return trace;
}

}  // namespace coadapt
