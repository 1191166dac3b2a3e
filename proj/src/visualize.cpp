#include "mammil/visualize.hpp"

#include <filesystem>
#include <fstream>

#include "mammil/errors.hpp"

namespace fs = std::filesystem;

namespace mammil {

namespace {

void burn_box(Grid& g, const RoiBox& b) {
    for (std::int64_t x = b.x0; x < b.x1; ++x) {
        g.at(b.y0, x) = 1.0;
        g.at(b.y1 - 1, x) = 1.0;
    }
    for (std::int64_t y = b.y0; y < b.y1; ++y) {
        g.at(y, b.x0) = 1.0;
        g.at(y, b.x1 - 1) = 1.0;
    }
}

}  // namespace

void emit_case_visualization(const CaseModel& model, const CaseRecord& c,
                             const std::string& out_dir) {
    fs::create_directories(out_dir);
    CaseOutput out = model.case_forward(c);
    std::ofstream sidecar(fs::path(out_dir) / "attention.txt", std::ios::trunc);
    if (!sidecar) throw DataError("visualize: cannot write sidecar in " + out_dir);
    sidecar << "case_id = " << c.case_id << "\n";
    sidecar << "final_prob = " << out.heads.final().item() << "\n";
    for (std::size_t i = 0; i < c.images.size(); ++i) {
        const auto& img = c.images[i];
        const std::string stem = to_string(img.side) + "-" + to_string(img.view);
        write_pgm((fs::path(out_dir) / (stem + "_input.pgm")).string(), img.pixels);

        const auto& bundle = out.bundles[i];
        Grid sal(model.sal_h(), model.sal_w());
        sal.v = bundle.saliency.data();
        write_pgm((fs::path(out_dir) / (stem + "_saliency.pgm")).string(),
                  resize_bilinear(sal, img.pixels.h, img.pixels.w));

        Grid boxed = img.pixels;
        for (const auto& cand : bundle.patches) burn_box(boxed, cand.box);
        write_pgm((fs::path(out_dir) / (stem + "_candidates.pgm")).string(), boxed);

        sidecar << "image." << stem << ".attention = " << out.image_attention[i] << "\n";
        for (std::size_t j = 0; j < bundle.patches.size(); ++j)
            sidecar << "image." << stem << ".patch" << j
                    << ".attention = " << bundle.patches[j].attention << "\n";
    }
}

}  // namespace mammil
