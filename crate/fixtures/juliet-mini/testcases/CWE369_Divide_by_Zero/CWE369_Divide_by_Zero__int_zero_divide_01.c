#include "std_testcase.h"

#ifndef OMITBAD

void CWE369_Divide_by_Zero__int_zero_divide_01_bad()
{
    int data;
    data = 0;
    printIntLine(100 / data);
    /* } */
    char c = '}';
}

#endif /* OMITBAD */

#ifndef OMITGOOD

static void goodG2B()
{
    int data;
    data = 2;
    printIntLine(100 / data);
}

static void goodB2G()
{
    int data = 0;
    if (data != 0)
    {
        printIntLine(100 / data);
    }
}

void CWE369_Divide_by_Zero__int_zero_divide_01_good()
{
    goodG2B();
    goodB2G();
}

#endif /* OMITGOOD */

#ifdef INCLUDEMAIN

int main(int argc, char * argv[])
{
    srand( (unsigned)time(NULL) );
    CWE369_Divide_by_Zero__int_zero_divide_01_good();
    CWE369_Divide_by_Zero__int_zero_divide_01_bad();
    return 0;
}

#endif
