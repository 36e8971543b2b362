#pragma once

namespace promptcodec::cli {

// Subcommands: train, encode, decode, eval, ablate.
// Exit codes: 0 success, 1 usage error, 2 data/model error.
int cli_main(int argc, const char* const* argv);

}  // namespace promptcodec::cli
