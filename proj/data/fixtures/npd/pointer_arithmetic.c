#include <stddef.h>
#include <string.h>

/* strchr may return NULL; the offset is applied before any check */
size_t field_length(const char *line)
{
    const char *sep = strchr(line, ':');
    const char *value = sep + 1;
    return strlen(value);
}

int sum_prefix(const int *values, size_t n)
{
    int total = 0;
    if (!values)
        return 0;
    for (size_t i = 0; i < n; i++)
        total += *(values + i);
    return total;
}
