// Generates the bundled synthetic accident corpus used by the demo config and
// the end-to-end tests. Fully deterministic for a fixed seed; the checked-in
// fixture under data/ was produced with the defaults below.
//
// Usage: gen_synth_corpus [output.jsonl] [seed]

#include <array>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "labelaudit/corpus.hpp"
#include "labelaudit/rng.hpp"

namespace {

using labelaudit::Label;
using labelaudit::Rng;

struct Theme {
  Label label;
  std::vector<std::string> openers;
  std::vector<std::string> words;
};

const std::vector<Theme>& themes() {
  static const std::vector<Theme> all = {
      {Label::A1,
       {"Driver lost control", "Car skidded", "Vehicle left the lane"},
       {"icy", "curve", "barrier", "speed", "swerved", "guardrail", "slippery", "bend",
        "embankment", "hydroplaned"}},
      {Label::A2,
       {"While turning left", "Turning across traffic", "During a left turn"},
       {"oncoming", "parallel", "signal", "intersection", "yielded", "collided", "lane",
        "opposing", "arrow", "gap"}},
      {Label::A3,
       {"While turning right", "Turning into the side street", "At the junction"},
       {"perpendicular", "side", "junction", "crossed", "path", "entering", "priority",
        "corner", "merging", "blocked"}},
      {Label::A4,
       {"A pedestrian stepped onto the crosswalk", "Pedestrian was crossing",
        "At the zebra crossing"},
       {"pedestrian", "crosswalk", "crossing", "stepped", "walked", "curb", "lights",
        "island", "stroller", "overlooked"}},
      {Label::A5,
       {"A parked car was hit", "While leaving the parking lot", "In the parking garage"},
       {"parked", "parking", "garage", "mirror", "scratched", "stationary", "bumper",
        "maneuvering", "space", "dent"}},
      {Label::A6,
       {"Traffic slowed suddenly", "In stop-and-go traffic", "Following too closely"},
       {"rear", "ended", "braked", "ahead", "following", "distance", "queue", "tailgate",
        "shunt", "column"}}};
  return all;
}

// Fallback-category subtypes: most are parking-flavored (the mislabeling the
// audit is meant to surface), some genuinely miscellaneous, a few
// pedestrian-flavored.
const Theme& a7_parking() {
  static const Theme t{
      Label::A7,
      {"Unknown driver damaged a parked car", "Damage discovered in the parking garage",
       "A parked vehicle was scraped"},
      {"parked", "garage", "parking", "dent", "mirror", "unknown", "damage", "returned",
       "scratch", "fled"}};
  return t;
}

const Theme& a7_misc() {
  static const Theme t{Label::A7,
                       {"A deer jumped onto the road", "Debris on the carriageway",
                        "Circumstances remain unclear"},
                       {"animal", "object", "debris", "unclear", "unknown", "roadway",
                        "evasive", "wildlife", "obstacle", "report"}};
  return t;
}

const Theme& a7_crossing() {
  static const Theme t{Label::A7,
                       {"Near the crosswalk", "A pedestrian was involved"},
                       {"pedestrian", "crossing", "unclear", "stepped", "roadside",
                        "dusk", "report", "witness"}};
  return t;
}

std::string make_text(const Theme& theme, Rng& rng) {
  std::string text = theme.openers[rng.uniform_index(theme.openers.size())];
  const std::size_t extra = 4 + rng.uniform_index(5);
  for (std::size_t i = 0; i < extra; ++i) {
    text += ' ';
    text += theme.words[rng.uniform_index(theme.words.size())];
  }
  text += '.';
  return text;
}

const char* road_for(Label label, bool parking_flavor, Rng& rng) {
  switch (label) {
    case Label::A2:
    case Label::A3:
      return "junction";
    case Label::A4:
      return "crossing";
    case Label::A5:
      return "parking_lot";
    case Label::A7:
      if (parking_flavor) return "parking_lot";
      return rng.uniform() < 0.5 ? "straight" : "junction";
    default:
      return "straight";
  }
}

}  // namespace

int main(int argc, char** argv) {
  const std::string out_path = argc > 1 ? argv[1] : "data/synthetic_corpus.jsonl";
  const std::uint64_t seed = argc > 2 ? std::stoull(argv[2]) : 20240601ULL;
  Rng rng(seed);

  // 200 documents, 49% in the fallback class; within it, parking-flavored
  // texts dominate so the stub labeler disagrees the way a second opinion
  // should.
  struct Slot {
    const Theme* theme;
    bool parking_flavor;
  };
  std::vector<Slot> slots;
  const std::array<std::pair<Label, int>, 6> named_counts = {
      {{Label::A1, 18}, {Label::A2, 14}, {Label::A3, 16}, {Label::A4, 15}, {Label::A5, 25},
       {Label::A6, 14}}};
  for (const auto& [label, count] : named_counts)
    for (int i = 0; i < count; ++i)
      slots.push_back({&themes()[static_cast<std::size_t>(labelaudit::label_index(label))], false});
  for (int i = 0; i < 68; ++i) slots.push_back({&a7_parking(), true});
  for (int i = 0; i < 24; ++i) slots.push_back({&a7_misc(), false});
  for (int i = 0; i < 6; ++i) slots.push_back({&a7_crossing(), false});
  rng.shuffle(slots);

  const std::array<double, labelaudit::kNumLabels> hour_mean = {8, 17, 16, 12, 20, 9, 14};
  const std::vector<std::string> weather = {"dry", "rain", "snow", "fog"};

  std::string out;
  int test_counter = 0;
  const std::array<std::size_t, 3> empty_text_at = {23, 87, 151};
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const Slot& slot = slots[i];
    const Label label = slot.theme->label;
    nlohmann::json j;
    char id[16];
    std::snprintf(id, sizeof(id), "doc%04zu", i + 1);
    j["id"] = id;

    const bool empty_text =
        (i == empty_text_at[0] || i == empty_text_at[1] || i == empty_text_at[2]);
    j["text"] = empty_text ? std::string{} : make_text(*slot.theme, rng);
    j["human_label"] = labelaudit::label_code(label);

    nlohmann::json tab = nlohmann::json::object();
    if (rng.uniform() > 0.03) {
      const double h = hour_mean[static_cast<std::size_t>(labelaudit::label_index(label))] +
                       3.0 * rng.normal();
      tab["hour"] = std::max<std::int64_t>(0, std::min<std::int64_t>(23, std::llround(h)));
    }
    tab["vehicles"] = static_cast<std::int64_t>(1 + rng.uniform_index(3));
    if (rng.uniform() > 0.05) {
      if (rng.uniform() < 0.01)
        tab["weather"] = "hail";  // value outside the schema's category list
      else
        tab["weather"] = weather[rng.uniform_index(weather.size())];
    }
    tab["road"] = road_for(label, slot.parking_flavor, rng);
    j["tabular"] = tab;

    if (!empty_text && ++test_counter % 7 == 0) j["split"] = "test";
    out += j.dump();
    out += '\n';
  }

  labelaudit::write_file(out_path, out);
  std::cout << "wrote " << slots.size() << " documents to " << out_path << "\n";
  return 0;
}
