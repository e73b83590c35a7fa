#include "aslice/cli.hpp"

int main(int argc, char** argv) { return aslice::cli_main(argc, argv); }
