#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

// Closed word lists of the synthetic tasks.
namespace mmict::lexicon {

// Symbol id 0 is empty background; object symbol s (1-based) is kObjects[s-1].
inline constexpr std::array<std::string_view, 8> kObjects = {"cat", "dog", "bird", "fish",
                                                             "cow", "pig", "fox", "owl"};
inline constexpr std::array<std::string_view, 8> kColors = {"red",  "blue", "green", "pink",
                                                            "gray", "gold", "teal",  "plum"};
// icl-map paired text is "<phrasing> <color>".
inline constexpr std::array<std::string_view, 6> kMapPhrasings = {"it is",    "this is",    "that is",
                                                                  "it shows", "this shows", "that shows"};

inline constexpr std::array<std::string_view, 6> kImageTemplates = {
    "A short image caption:",
    "A image that shows",
    "Write a short description for the image.",
    "Briefly describe the content of the image.",
    "Use a few words to illustrate what is happening in the image.",
    "Can you briefly explain what you see in the image?",
};
inline constexpr std::array<std::string_view, 6> kVideoTemplates = {
    "A short video caption:",
    "A video that shows",
    "Write a short description for the video.",
    "Briefly describe the content of the video.",
    "Use a few words to illustrate what is happening in the video.",
    "Can you briefly explain what you see in the video?",
};

inline constexpr std::array<std::string_view, 2> kRowWords = {"top", "bottom"};
inline constexpr std::array<std::string_view, 2> kColWords = {"left", "right"};

inline constexpr std::string_view kQuestionPrefix = "Question:";
inline constexpr std::string_view kAnswerMarker = "Answer:";

// Every word used by the generators, deduplicated, in first-use order.
std::vector<std::string> vocabulary();

}  // namespace mmict::lexicon
