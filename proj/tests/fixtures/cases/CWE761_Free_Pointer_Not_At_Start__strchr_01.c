/*
 * Pointer advanced by strchr handed to free.
 */
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#ifndef OMITBAD

void CWE761_Free_Pointer_Not_At_Start__strchr_01_bad()
{
    char * data = (char *)malloc(100 * sizeof(char));
    if (data == NULL)
    {
        exit(-1);
    }
    strcpy(data, "ab.cd");
    {
        char * dot = strchr(data, '.');
        if (dot != NULL)
        {
            *dot = '\0';
        }
        printf("%s\n", data);
        /* dot no longer points at the allocation start */
        free(dot);
    }
}

#endif /* OMITBAD */

#ifndef OMITGOOD

static void goodB2G()
{
    char * data = (char *)malloc(100 * sizeof(char));
    if (data == NULL)
    {
        exit(-1);
    }
    strcpy(data, "ab.cd");
    {
        char * dot = strchr(data, '.');
        if (dot != NULL)
        {
            *dot = '\0';
        }
        printf("%s\n", data);
        free(data);
    }
}

void CWE761_Free_Pointer_Not_At_Start__strchr_01_good()
{
    goodB2G();
}

#endif /* OMITGOOD */

#ifdef INCLUDEMAIN

int main(int argc, char * argv[])
{
#ifndef OMITGOOD
    CWE761_Free_Pointer_Not_At_Start__strchr_01_good();
#endif /* OMITGOOD */
#ifndef OMITBAD
    CWE761_Free_Pointer_Not_At_Start__strchr_01_bad();
#endif /* OMITBAD */
    return 0;
}

#endif /* INCLUDEMAIN */
