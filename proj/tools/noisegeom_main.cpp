#include "noisegeom/cli.hpp"

int main(int argc, char** argv) { return noisegeom::cli_main(argc, argv); }
