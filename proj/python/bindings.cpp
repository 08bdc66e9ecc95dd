#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "zoosight/augmenter.hpp"
#include "zoosight/caption_scorer.hpp"
#include "zoosight/cli.hpp"
#include "zoosight/evaluator.hpp"
#include "zoosight/matcher.hpp"
#include "zoosight/review_service.hpp"

namespace py = pybind11;
using namespace zoosight;
using nlohmann::json;

namespace {

Image to_image(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& array) {
    if (array.ndim() != 3 || array.shape(2) != 3) throw py::value_error("expected an HxWx3 uint8 array");
    Image image(static_cast<int>(array.shape(1)), static_cast<int>(array.shape(0)));
    std::copy(array.data(), array.data() + array.size(), image.rgb.begin());
    return image;
}

std::string dump(const json& doc) { return doc.dump(); }

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Native core of zoosight";

    static py::handle error_type = py::exception<Error>(m, "Error").release();
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = py::reinterpret_borrow<py::object>(error_type)(py::str(e.what()));
            exc.attr("code") = std::string(code_name(e.code()));
            PyErr_SetObject(error_type.ptr(), exc.ptr());
        }
    });

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out;
            std::ostringstream err;
            int code = 0;
            {
                py::gil_scoped_release release;
                code = run_cli(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"));

    m.def(
        "evaluate_jsonl",
        [](const std::string& jsonl, int n_bins, std::optional<std::vector<double>> thresholds) {
            return dump(to_json(evaluate(parse_prediction_log(jsonl), n_bins, std::move(thresholds))));
        },
        py::arg("jsonl"), py::arg("n_bins") = kDefaultBins, py::arg("thresholds") = py::none());

    m.def("normalize_answer", &normalize_answer, py::arg("raw"), py::arg("labels"));
    m.def(
        "majority_vote", [](const std::vector<std::string>& labels) { return majority_vote(labels); },
        py::arg("labels"));
    m.def(
        "render_matching_prompt",
        [](const std::string& caption, const std::string& kb_json) {
            const auto request = render_matching_prompt(caption, knowledge_base_from_json(json::parse(kb_json)));
            return py::make_tuple(request.system_message, request.prompt);
        },
        py::arg("caption"), py::arg("kb_json"));
    m.def("parse_score", &parse_score, py::arg("raw"));
    m.def(
        "low_color_variation",
        [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& array, double crop_fraction,
           int epsilon) {
            const auto report = detect_low_color_variation(to_image(array), crop_fraction, epsilon);
            return py::make_tuple(report.low_color_variation, report.max_channel_spread);
        },
        py::arg("image"), py::arg("crop_fraction") = kDefaultCropFraction, py::arg("epsilon") = kDefaultColorEpsilon);

    py::class_<ReviewService>(m, "ReviewService")
        .def(py::init([](std::optional<std::string> state_dir, std::size_t snapshot_every) {
                 ReviewOptions options;
                 if (state_dir) options.state_dir = *state_dir;
                 options.snapshot_every = snapshot_every;
                 return std::make_unique<ReviewService>(options);
             }),
             py::arg("state_dir") = py::none(), py::arg("snapshot_every") = 64)
        .def(
            "create_run",
            [](ReviewService& s, const std::string& jsonl, std::vector<std::string> labels, double p,
               std::optional<std::string> run_id) {
                return s.create_run(parse_prediction_log(jsonl), std::move(labels), p, "", std::move(run_id))->run_id;
            },
            py::arg("jsonl"), py::arg("labels"), py::arg("p"), py::arg("run_id") = py::none())
        .def("run_ids", &ReviewService::run_ids)
        .def(
            "next_item",
            [](ReviewService& s, const std::string& run_id, const std::string& reviewer) -> std::optional<std::string> {
                const auto item = s.next_review_item(run_id, reviewer);
                if (!item) return std::nullopt;
                return dump(to_json(*item, *s.run(run_id)));
            },
            py::arg("run_id"), py::arg("reviewer"))
        .def(
            "submit_label",
            [](ReviewService& s, const std::string& item_id, const std::string& label, const std::string& reviewer) {
                const auto item = s.submit_label(item_id, label, reviewer);
                return dump(to_json(item, *s.run(item.run_id)));
            },
            py::arg("item_id"), py::arg("label"), py::arg("reviewer"))
        .def(
            "summary", [](const ReviewService& s, const std::string& run_id) { return dump(to_json(s.run_summary(run_id))); },
            py::arg("run_id"));
}
