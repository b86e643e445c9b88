/* Dense slot lookup for FaultLookupTable.query.
 *
 * SlotIndex(slots: list, bucket_count: int, category_count: int)
 * SlotIndex.query(category, strength) -> entry or None
 *
 * `category` is an int id or any object with an integer `id` attribute.
 * Performs no heap allocation on the success path.
 */
#define PY_SSIZE_T_CLEAN
#include <Python.h>

typedef struct {
    PyObject_HEAD
    PyObject **slots;
    Py_ssize_t nslots;
    long buckets;
    long categories;
} SlotIndex;

static PyObject *id_name = NULL;

static void
SlotIndex_dealloc(SlotIndex *self)
{
    if (self->slots) {
        for (Py_ssize_t i = 0; i < self->nslots; i++)
            Py_XDECREF(self->slots[i]);
        PyMem_Free(self->slots);
    }
    Py_TYPE(self)->tp_free((PyObject *)self);
}

static int
SlotIndex_init(SlotIndex *self, PyObject *args, PyObject *kwds)
{
    PyObject *seq;
    long buckets, categories;
    if (!PyArg_ParseTuple(args, "Oll", &seq, &buckets, &categories))
        return -1;
    if (buckets < 1 || categories < 1) {
        PyErr_SetString(PyExc_ValueError, "bucket and category counts must be positive");
        return -1;
    }
    PyObject *fast = PySequence_Fast(seq, "slots must be a sequence");
    if (!fast)
        return -1;
    Py_ssize_t n = PySequence_Fast_GET_SIZE(fast);
    if (n != (Py_ssize_t)buckets * categories) {
        Py_DECREF(fast);
        PyErr_SetString(PyExc_ValueError, "slot count must equal buckets * categories");
        return -1;
    }
    PyObject **slots = PyMem_Calloc((size_t)n, sizeof(PyObject *));
    if (!slots) {
        Py_DECREF(fast);
        PyErr_NoMemory();
        return -1;
    }
    for (Py_ssize_t i = 0; i < n; i++) {
        slots[i] = PySequence_Fast_GET_ITEM(fast, i);
        Py_INCREF(slots[i]);
    }
    Py_DECREF(fast);
    self->slots = slots;
    self->nslots = n;
    self->buckets = buckets;
    self->categories = categories;
    return 0;
}

static long
category_id(PyObject *cat)
{
    if (PyLong_CheckExact(cat))
        return PyLong_AsLong(cat);
    PyObject *idobj = PyObject_GetAttr(cat, id_name);
    if (!idobj)
        return -1;
    long cid = PyLong_AsLong(idobj);
    Py_DECREF(idobj);
    return cid;
}

static PyObject *
SlotIndex_query(SlotIndex *self, PyObject *const *args, Py_ssize_t nargs)
{
    if (nargs != 2) {
        PyErr_SetString(PyExc_TypeError, "query(category, strength)");
        return NULL;
    }
    long cid = category_id(args[0]);
    if (cid == -1 && PyErr_Occurred())
        return NULL;
    if (cid < 0 || cid >= self->categories) {
        PyErr_Format(PyExc_KeyError, "category id %ld out of range", cid);
        return NULL;
    }
    double s = PyFloat_CheckExact(args[1]) ? PyFloat_AS_DOUBLE(args[1]) : PyFloat_AsDouble(args[1]);
    if (s == -1.0 && PyErr_Occurred())
        return NULL;
    if (!(s >= 0.0 && s <= 1.0)) {
        PyErr_SetString(PyExc_ValueError, "strength outside [0, 1]");
        return NULL;
    }
    long b = (long)(s * (double)self->buckets);
    if (b >= self->buckets)
        b = self->buckets - 1;
    PyObject *hit = self->slots[cid * self->buckets + b];
    Py_INCREF(hit);
    return hit;
}

static PyMethodDef SlotIndex_methods[] = {
    {"query", (PyCFunction)(void (*)(void))SlotIndex_query, METH_FASTCALL, "query(category, strength)"},
    {NULL, NULL, 0, NULL}
};

static PyTypeObject SlotIndexType = {
    PyVarObject_HEAD_INIT(NULL, 0)
    .tp_name = "faultforge._slots.SlotIndex",
    .tp_basicsize = sizeof(SlotIndex),
    .tp_flags = Py_TPFLAGS_DEFAULT,
    .tp_new = PyType_GenericNew,
    .tp_init = (initproc)SlotIndex_init,
    .tp_dealloc = (destructor)SlotIndex_dealloc,
    .tp_methods = SlotIndex_methods,
};

static struct PyModuleDef slots_module = {
    PyModuleDef_HEAD_INIT, "_slots", "Dense slot lookup for fault tables.", -1, NULL
};

PyMODINIT_FUNC
PyInit__slots(void)
{
    if (PyType_Ready(&SlotIndexType) < 0)
        return NULL;
    id_name = PyUnicode_InternFromString("id");
    if (!id_name)
        return NULL;
    PyObject *m = PyModule_Create(&slots_module);
    if (!m)
        return NULL;
    Py_INCREF(&SlotIndexType);
    if (PyModule_AddObject(m, "SlotIndex", (PyObject *)&SlotIndexType) < 0) {
        Py_DECREF(&SlotIndexType);
        Py_DECREF(m);
        return NULL;
    }
    return m;
}
