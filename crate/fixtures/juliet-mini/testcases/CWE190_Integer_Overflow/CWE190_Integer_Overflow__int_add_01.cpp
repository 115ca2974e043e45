#include "std_testcase.h"

namespace CWE190_Integer_Overflow__int_add_01
{

#ifndef OMITBAD

void bad()
{
    int data = INT_MAX;
    int result = data + 1;
    printIntLine(result);
}

#endif /* OMITBAD */

#ifndef OMITGOOD

static void goodG2B()
{
    int data = 2;
    int result = data + 1;
    printIntLine(result);
}

void good()
{
    goodG2B();
}

#endif /* OMITGOOD */

} /* close namespace */
