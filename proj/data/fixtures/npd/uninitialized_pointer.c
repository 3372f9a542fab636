#include <stdio.h>

struct config {
    int verbose;
};

/* cfg is only assigned on one branch */
int read_verbosity(int use_defaults)
{
    struct config *cfg;
    static struct config defaults = { 0 };
    if (use_defaults)
        cfg = &defaults;
    return cfg->verbose;
}

void print_banner(const char *title)
{
    printf("== %s ==\n", title ? title : "untitled");
}
