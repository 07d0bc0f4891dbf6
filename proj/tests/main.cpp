#include <malloc.h>

#include <catch_amalgamated.hpp>

int main(int argc, char** argv) {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return Catch::Session().run(argc, argv);
}
