#include "promptcodec/cli.hpp"

int main(int argc, char** argv) { return promptcodec::cli::cli_main(argc, argv); }
