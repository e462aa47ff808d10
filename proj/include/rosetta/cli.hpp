#pragma once

namespace rosetta::cli {

// Entry point behind the `rosetta` binary. Parses a subcommand
// (gen-corpus, pseudo-label, train, translate, evaluate, ablate, plot),
// runs it, and maps failures to stable exit codes:
//   0  success            2  usage (bad flag/subcommand)
//   3  configuration      4  input data        5  io
//   70 internal (anything unexpected)
// Every failure prints one line to stderr:
//   rosetta: error: <category>: <message>
int run(int argc, const char* const* argv);

}  // namespace rosetta::cli
