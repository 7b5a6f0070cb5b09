#include "fundus/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace fundus::metrics {

double binary_dice(const MaskImage& x, const MaskImage& y) {
    if (x.height != y.height || x.width != y.width)
        throw std::invalid_argument("binary_dice: mask sizes differ");
    std::int64_t inter = 0, nx = 0, ny = 0;
    for (std::size_t e = 0; e < x.v.size(); ++e) {
        inter += x.v[e] & y.v[e];
        nx += x.v[e];
        ny += y.v[e];
    }
    if (nx + ny == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(nx + ny);
}

double iou(const MaskImage& x, const MaskImage& y) {
    if (x.height != y.height || x.width != y.width)
        throw std::invalid_argument("iou: mask sizes differ, " + std::to_string(x.height) + "x" +
                                    std::to_string(x.width) + " vs " + std::to_string(y.height) +
                                    "x" + std::to_string(y.width));
    std::int64_t inter = 0, uni = 0;
    for (std::size_t e = 0; e < x.v.size(); ++e) {
        inter += x.v[e] & y.v[e];
        uni += x.v[e] | y.v[e];
    }
    if (uni == 0) return 1.0;  // agreement on absence
    return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {
// Inclusive row extent of a mask; 0 when empty.
int row_extent(const MaskImage& m) {
    int lo = -1, hi = -1;
    for (int i = 0; i < m.height; ++i)
        for (int j = 0; j < m.width; ++j)
            if (m.at(i, j)) {
                if (lo < 0) lo = i;
                hi = i;
                break;
            }
    return lo < 0 ? 0 : hi - lo + 1;
}
}  // namespace

double vertical_cdr(const MaskImage& disc, const MaskImage& cup) {
    const int d = row_extent(disc);
    if (d == 0) throw std::invalid_argument("vertical_cdr: disc mask is empty, ratio undefined");
    const int c = row_extent(cup);
    return static_cast<double>(c) / static_cast<double>(d);
}

std::string EvalReport::to_csv() const {
    std::ostringstream os;
    os << "id,dice_disc,iou_disc,dice_cup,iou_cup,cdr\n";
    char buf[256];
    auto emit = [&](const EvalRow& r) {
        std::snprintf(buf, sizeof buf, "%s,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.id.c_str(), r.dice_disc,
                      r.iou_disc, r.dice_cup, r.iou_cup, r.cdr);
        os << buf;
    };
    for (const auto& r : rows) emit(r);
    EvalRow m = mean;
    m.id = "MEAN";
    emit(m);
    return os.str();
}

EvalReport EvalReport::from_csv(const std::string& text) {
    EvalReport rep;
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != "id,dice_disc,iou_disc,dice_cup,iou_cup,cdr")
        throw std::invalid_argument("eval report: bad header");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        EvalRow r;
        std::string field;
        std::getline(ls, r.id, ',');
        double* cols[5] = {&r.dice_disc, &r.iou_disc, &r.dice_cup, &r.iou_cup, &r.cdr};
        for (double* c : cols) {
            if (!std::getline(ls, field, ','))
                throw std::invalid_argument("eval report: row with missing columns: " + line);
            *c = std::stod(field);
        }
        if (std::getline(ls, field, ','))
            throw std::invalid_argument("eval report: row with extra columns: " + line);
        if (r.id == "MEAN")
            rep.mean = r;
        else
            rep.rows.push_back(r);
    }
    return rep;
}

}  // namespace fundus::metrics
