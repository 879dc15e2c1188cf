// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "forgetlab/asd_engine.hpp"
#include "forgetlab/rewriter.hpp"
#include "forgetlab/rfp.hpp"

using namespace forgetlab;

namespace {

qa::Dataset mixed_dataset(std::size_t n) {
    qa::Dataset d("bench");
    for (std::size_t i = 0; i < n; ++i) {
        qa::InstructionSample s;
        s.id = "b" + std::to_string(i);
        s.format = qa::kAllFormats[i % qa::kAllFormats.size()];
        s.rfp = std::string(asd::rfp_for(s.format, true));
        switch (s.format) {
            case qa::QuestionFormat::YesNo:
                s.question = "Is the cup blue?";
                s.gt_label = i % 2 ? "Yes" : "No";
                break;
            case qa::QuestionFormat::MultipleChoice:
                s.question = "Which color is the cup?";
                s.options = {"red", "blue", "green", "yellow"};
                s.gt_label = qa::option_letter(i % 4);
                break;
            case qa::QuestionFormat::ShortAnswer:
                s.question = "What color is the cup?";
                s.gt_label = "blue";
                break;
            default:
                s.question = "Describe the table.";
                s.gt_label = "A blue cup stands on a wooden table beside an open book and a pair of reading glasses.";
                break;
        }
        d.add(s);
    }
    return d;
}

void BM_TransformDataset(benchmark::State& state) {
    const auto input = mixed_dataset(static_cast<std::size_t>(state.range(0)));
    rewrite::TemplateRewriter rw({"red", "blue", "green", "yellow", "cup", "book"});
    for (auto _ : state) benchmark::DoNotOptimize(asd::transform_dataset(input, 20, rw, 0));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TransformDataset)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace
