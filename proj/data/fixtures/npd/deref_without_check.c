#include <stdlib.h>
#include <string.h>

struct record {
    int id;
    char *name;
};

/* malloc result is used without a NULL test */
struct record *make_record(int id)
{
    struct record *r = malloc(sizeof *r);
    r->id = id;
    r->name = NULL;
    return r;
}

int record_id(const struct record *r)
{
    if (r == NULL)
        return -1;
    return r->id;
}
