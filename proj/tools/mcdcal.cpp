#include "mcdcal/cli.hpp"

int main(int argc, char** argv) { return mcdcal::cli::cli_main(argc, argv); }
