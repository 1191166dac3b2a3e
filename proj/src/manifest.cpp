#include "mammil/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "mammil/errors.hpp"

namespace fs = std::filesystem;

namespace mammil {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

std::vector<RoiBox> parse_roi_boxes(const std::string& cell, int line_no) {
    std::vector<RoiBox> boxes;
    if (cell.empty()) return boxes;
    for (const auto& item : split(cell, ';')) {
        if (item.empty()) continue;
        const auto f = split(item, ':');
        if (f.size() != 6)
            throw DataError("manifest line " + std::to_string(line_no) + ": roi box '" + item +
                            "' must be x0:y0:x1:y1:kind:label");
        RoiBox b;
        try {
            b.x0 = std::stoll(f[0]);
            b.y0 = std::stoll(f[1]);
            b.x1 = std::stoll(f[2]);
            b.y1 = std::stoll(f[3]);
        } catch (const std::exception&) {
            throw DataError("manifest line " + std::to_string(line_no) +
                            ": non-numeric roi coordinate in '" + item + "'");
        }
        b.kind = parse_roi_kind(f[4]);
        b.label = parse_label(f[5]);
        boxes.push_back(b);
    }
    return boxes;
}

std::string roi_boxes_cell(const std::vector<RoiBox>& boxes) {
    std::ostringstream os;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const auto& b = boxes[i];
        os << (i ? ";" : "") << b.x0 << ":" << b.y0 << ":" << b.x1 << ":" << b.y1 << ":"
           << to_string(b.kind) << ":" << to_string(b.label);
    }
    return os.str();
}

constexpr const char* kHeader = "case_id,side,view,path,case_label,image_label,roi_boxes";

}  // namespace

std::vector<CaseRecord> load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("manifest: cannot open " + path);
    const fs::path base = fs::path(path).parent_path();
    std::string line;
    int line_no = 0;
    if (!std::getline(is, line)) return {};
    ++line_no;
    if (line != kHeader)
        throw DataError("manifest line 1: expected header '" + std::string(kHeader) + "'");

    // assemble in first-appearance order of case_id
    std::vector<std::string> order;
    std::map<std::string, CaseRecord> by_id;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split(line, ',');
        if (cells.size() != 7)
            throw DataError("manifest line " + std::to_string(line_no) + ": expected 7 columns, got " +
                            std::to_string(cells.size()));
        const std::string& case_id = cells[0];
        ImageRecord img;
        try {
            img.side = parse_side(cells[1]);
            img.view = parse_view(cells[2]);
        } catch (const DataError& e) {
            throw DataError("manifest line " + std::to_string(line_no) + ": " + e.what());
        }
        img.source_path = cells[3];
        const Label case_label = parse_label(cells[4]);
        if (!cells[5].empty()) img.image_label = parse_label(cells[5]);
        img.roi_boxes = parse_roi_boxes(cells[6], line_no);
        const fs::path img_path = fs::path(cells[3]).is_absolute() ? fs::path(cells[3])
                                                                   : base / cells[3];
        img.pixels = read_pgm(img_path.string());

        auto [it, inserted] = by_id.try_emplace(case_id);
        if (inserted) {
            order.push_back(case_id);
            it->second.case_id = case_id;
            it->second.case_label = case_label;
        } else if (it->second.case_label != case_label) {
            throw DataError("manifest line " + std::to_string(line_no) + ": case " + case_id +
                            " has conflicting case labels");
        }
        for (const auto& existing : it->second.images)
            if (existing.side == img.side && existing.view == img.view)
                throw DataError("manifest line " + std::to_string(line_no) + ": duplicate (" +
                                case_id + ", " + to_string(img.side) + ", " + to_string(img.view) +
                                ")");
        it->second.images.push_back(std::move(img));
    }
    std::vector<CaseRecord> cases;
    cases.reserve(order.size());
    for (const auto& id : order) {
        validate_case(by_id[id]);
        cases.push_back(std::move(by_id[id]));
    }
    return cases;
}

void write_manifest(const std::vector<CaseRecord>& cases, const std::string& manifest_path,
                    const std::string& image_dir, int maxval) {
    const fs::path base = fs::path(manifest_path).parent_path();
    fs::create_directories(base / image_dir);
    std::ofstream os(manifest_path, std::ios::trunc);
    if (!os) throw DataError("manifest: cannot open " + manifest_path + " for writing");
    os << kHeader << "\n";
    for (const auto& c : cases) {
        for (const auto& img : c.images) {
            const std::string rel =
                image_dir + "/" + c.case_id + "_" + to_string(img.side) + "-" + to_string(img.view) +
                ".pgm";
            write_pgm((base / rel).string(), img.pixels, maxval);
            os << c.case_id << "," << to_string(img.side) << "," << to_string(img.view) << ","
               << rel << "," << to_string(c.case_label) << ","
               << (img.image_label ? to_string(*img.image_label) : std::string()) << ","
               << roi_boxes_cell(img.roi_boxes) << "\n";
        }
    }
    if (!os) throw DataError("manifest: write to " + manifest_path + " failed");
}

}  // namespace mammil
